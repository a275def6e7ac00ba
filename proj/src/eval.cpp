#include "condensor/eval.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "condensor/rng.hpp"
#include "condensor/train.hpp"

namespace condensor {

EvalConfig EvalConfig::paper() {
  EvalConfig c;
  c.preset = "paper";
  c.lr = 5e-6;
  return c;
}

void EvalConfig::validate() const {
  if (reps < 1) throw Error("eval: reps must be >= 1");
  if (epochs < 0) throw Error("eval: epochs must be >= 0");
  if (lr < 0) throw Error("eval: lr must be >= 0");
  if (momentum < 0 || momentum >= 1) throw Error("eval: momentum must be in [0, 1)");
  if (batch < 0) throw Error("eval: batch must be >= 0");
  if (threads < 1) throw Error("eval: threads must be >= 1");
}

std::int64_t EvalConfig::batch_for(int ipc) const {
  if (batch > 0) return batch;
  return ipc == 1 ? 256 : 128;
}

void summarize(AccuracyStats& s) {
  const auto n = static_cast<double>(s.accuracies.size());
  if (s.accuracies.empty()) {
    s.mean = s.std = 0;
    return;
  }
  s.mean = std::accumulate(s.accuracies.begin(), s.accuracies.end(), 0.0) / n;
  double ss = 0;
  for (double a : s.accuracies) ss += (a - s.mean) * (a - s.mean);
  s.std = s.accuracies.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
}

AccuracyStats evaluate(const TensorSet& small, const TensorSet& test, const ModelArch& arch, const EvalConfig& cfg,
                       int ipc) {
  cfg.validate();
  if (test.size() == 0) throw DataError("eval: empty test set");
  if (small.size() == 0) throw DataError("eval: empty training set");
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  AccuracyStats s;
  s.batch = cfg.batch_for(ipc);
  s.accuracies.assign(static_cast<std::size_t>(cfg.reps), 0.0);
  s.rep_runtime_s.assign(static_cast<std::size_t>(cfg.reps), 0.0);
  for (int r = 0; r < cfg.reps; ++r) s.seeds.push_back(cfg.seed + static_cast<std::uint64_t>(r));

  auto run = [&](int r) {
    const auto start = clock::now();
    const auto seed = s.seeds[static_cast<std::size_t>(r)];
    auto params = init_params(arch, {derive_seed(seed, "eval.init"), small.images.dtype()});
    SgdConfig sgd;
    sgd.epochs = cfg.epochs;
    sgd.lr = cfg.lr;
    sgd.momentum = cfg.momentum;
    sgd.batch = s.batch;
    sgd.aug = cfg.aug;
    sgd.seed = derive_seed(seed, "eval.sgd");
    params = train_sgd(arch, params, small, sgd);
    s.accuracies[static_cast<std::size_t>(r)] = accuracy(arch, params, test);
    s.rep_runtime_s[static_cast<std::size_t>(r)] = std::chrono::duration<double>(clock::now() - start).count();
  };
  const int workers = std::min(cfg.threads, cfg.reps);
  if (workers <= 1) {
    for (int r = 0; r < cfg.reps; ++r) run(r);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (int r = w; r < cfg.reps; r += workers) run(r);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  summarize(s);
  s.runtime_s = std::chrono::duration<double>(clock::now() - t0).count();
  return s;
}

AccuracyStats full_dataset_reference(const TensorSet& train, const TensorSet& test, const ModelArch& arch,
                                     const EvalConfig& cfg) {
  return evaluate(train, test, arch, cfg, 0);
}

// ---- results CSV -------------------------------------------------------------------

namespace {

std::string number(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void check_field(const std::string& s, const char* what) {
  if (s.empty() || s.find_first_of(",\n\r\"") != std::string::npos)
    throw DataError(std::string("results: ") + what + " '" + s + "' must be non-empty and free of commas/quotes");
}

}  // namespace

std::vector<ResultRow> result_rows(const AccuracyStats& s, const std::string& dataset, const std::string& method,
                                   int ipc) {
  std::vector<ResultRow> rows;
  for (std::size_t r = 0; r < s.accuracies.size(); ++r)
    rows.push_back({dataset, method, ipc, static_cast<int>(r), s.seeds.at(r), s.accuracies[r],
                    r < s.rep_runtime_s.size() ? s.rep_runtime_s[r] : 0.0});
  return rows;
}

void append_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw FormatError(FormatError::Code::io, "cannot write '" + path.string() + "'");
  if (fresh) out << kResultsHeader << "\n";
  for (const auto& r : rows) {
    check_field(r.dataset, "dataset");
    check_field(r.method, "method");
    out << r.dataset << "," << r.method << "," << r.ipc << "," << r.rep << "," << r.seed << "," << number(r.accuracy)
        << "," << number(r.runtime_s) << "\n";
  }
}

std::vector<ResultRow> parse_results_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(FormatError::Code::bad_header, "results: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kResultsHeader)
    throw FormatError(FormatError::Code::bad_header, "results: header must be '" + std::string(kResultsHeader) + "'");
  std::vector<ResultRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 7)
      throw FormatError(FormatError::Code::bad_header, "results line " + std::to_string(lineno) + ": expected 7 fields");
    try {
      ResultRow r{f[0], f[1], std::stoi(f[2]), std::stoi(f[3]), std::stoull(f[4]), std::stod(f[5]), std::stod(f[6])};
      if (r.accuracy < 0 || r.accuracy > 1)
        throw FormatError(FormatError::Code::bad_header,
                          "results line " + std::to_string(lineno) + ": accuracy must be a fraction in [0, 1]");
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw FormatError(FormatError::Code::bad_header, "results line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return rows;
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_results_csv(std::string(bytes.begin(), bytes.end()));
}

}  // namespace condensor
