#pragma once

// Train-from-scratch evaluation: reps networks on a small set, top-1 on the test set.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "condensor/augment.hpp"
#include "condensor/dataset.hpp"
#include "condensor/model.hpp"

namespace condensor {

struct EvalConfig {
  std::string preset = "desk";
  int reps = 5;
  int epochs = 300;
  double lr = 0.01;
  double momentum = 0.9;
  std::int64_t batch = 0;  // 0: 256 when ipc == 1, else 128
  AugPolicy aug;
  std::uint64_t seed = 0;  // rep r uses seed + r
  int threads = 1;

  static EvalConfig paper();  // lr 5e-6
  void validate() const;
  std::int64_t batch_for(int ipc) const;
};

struct AccuracyStats {
  std::vector<double> accuracies;
  std::vector<std::uint64_t> seeds;
  double mean = 0;
  double std = 0;  // sample (n - 1)
  std::vector<double> rep_runtime_s;
  double runtime_s = 0;
  std::int64_t batch = 0;
};

void summarize(AccuracyStats& s);

// ipc = 0 marks a full-data run (batch 128 under the default rule).
AccuracyStats evaluate(const TensorSet& small, const TensorSet& test, const ModelArch& arch, const EvalConfig& cfg,
                       int ipc);
AccuracyStats full_dataset_reference(const TensorSet& train, const TensorSet& test, const ModelArch& arch,
                                     const EvalConfig& cfg);

struct ResultRow {
  std::string dataset;
  std::string method;
  int ipc = 0;
  int rep = 0;
  std::uint64_t seed = 0;
  double accuracy = 0;
  double runtime_s = 0;
};

inline constexpr const char* kResultsHeader = "dataset,method,ipc,rep,seed,accuracy,runtime_s";

std::vector<ResultRow> result_rows(const AccuracyStats& s, const std::string& dataset, const std::string& method,
                                   int ipc);
void append_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);
std::vector<ResultRow> parse_results_csv(const std::string& text);

}  // namespace condensor
