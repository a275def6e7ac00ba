#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace condensor {

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0;  // measured error, when the check has one
  double limit = 0;
  std::string detail;
};

// Finite-difference checks in f64: every primitive (first and second order), the
// ConvNet forward, each augmentation, and both distillation meta-gradients.
std::vector<CheckResult> gradient_suite(double tolerance = 1e-4);

// Closed-form values of the matching losses and the correlation, ZCA
// decorrelation, and byte-exact format round trips.
std::vector<CheckResult> algebraic_suite();

// Decodes each file as MDDS or MTTJ according to its magic.
std::vector<CheckResult> format_suite(const std::vector<std::filesystem::path>& files);

std::string format_check(const CheckResult& r);

}  // namespace condensor
