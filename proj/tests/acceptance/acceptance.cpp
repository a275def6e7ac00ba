// Acceptance checks; one PASS/FAIL line per criterion. An optional argument
// selects criteria by name prefix (gradient, algebraic, dc, mtt, indicator, repro).

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <unistd.h>

#include "condensor/baseline.hpp"
#include "condensor/dc.hpp"
#include "condensor/eval.hpp"
#include "condensor/indicator.hpp"
#include "condensor/log.hpp"
#include "condensor/mtt.hpp"
#include "condensor/selftest.hpp"
#include "condensor/synthetic.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace condensor;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome suite(const std::vector<CheckResult>& checks, double seconds, double budget) {
  Outcome o{seconds < budget, {}};
  int failed = 0;
  for (const auto& c : checks)
    if (!c.pass) {
      ++failed;
      o.pass = false;
      std::cerr << "  " << format_check(c) << "\n";
    }
  o.detail = fmt("%zu/%zu checks, %.1fs (budget %.0fs)", checks.size() - static_cast<std::size_t>(failed), checks.size(),
                 seconds, budget);
  return o;
}

// The generated 4-class 1x16x16 texture task, whitened with ZCA.
struct Task {
  TensorSet train, test;
  ModelArch arch{3, 32, 1, 16, 4, NormKind::instance};
};

Task texture_task() {
  auto [tr, te] = make_texture_dataset({});
  PreprocessConfig pc;
  pc.zca_epsilon = 0.05;
  auto pre = Preprocessor::fit(tr, pc);
  return {pre.apply(tr), pre.apply(te)};
}

double window_mean(const std::vector<double>& v, bool last) {
  const std::size_t n = std::min<std::size_t>(50, v.size());
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += last ? v[v.size() - 1 - i] : v[i];
  return s / static_cast<double>(n);
}

Outcome dc_vs_random() {
  const auto t0 = Clock::now();
  const auto task = texture_task();
  DcConfig dc;
  dc.ipc = 1;
  dc.outer_iters = 200;
  const auto res = dc_distill(task.train, task.arch, dc);
  EvalConfig ec;
  const auto dc_acc = evaluate(res.synthetic.as_set(), task.test, task.arch, ec, 1);
  // A fresh random subset per rep.
  AccuracyStats rnd;
  for (int r = 0; r < ec.reps; ++r) {
    EvalConfig one = ec;
    one.reps = 1;
    one.seed = ec.seed + static_cast<std::uint64_t>(r);
    auto s = evaluate(random_select(task.train, 1, 100 + static_cast<std::uint64_t>(r)), task.test, task.arch, one, 1);
    rnd.accuracies.push_back(s.accuracies[0]);
  }
  summarize(rnd);
  const double gap = (dc_acc.mean - rnd.mean) * 100;
  const double secs = since(t0);
  return {gap >= 5 && secs < 900,
          fmt("DC %.1f%% vs random %.1f%% (gap %.1f points, need >= 5), %.0fs (budget 900s)", dc_acc.mean * 100,
              rnd.mean * 100, gap, secs)};
}

Outcome mtt_effectiveness() {
  const auto t0 = Clock::now();
  const auto task = texture_task();
  TeacherConfig tc;
  tc.n_teachers = 3;
  tc.epochs = 5;
  const auto buffers = train_teachers(task.train, task.arch, tc);
  MttConfig mc;
  mc.ipc = 10;
  mc.iters = 400;
  const auto res = mtt_distill(buffers, task.train, task.arch, mc);
  EvalConfig ec;
  const auto mtt = evaluate(res.synthetic.as_set(), task.test, task.arch, ec, 10);
  EvalConfig ef = ec;
  ef.epochs = 20;
  ef.reps = 1;
  const auto full = full_dataset_reference(task.train, task.test, task.arch, ef);
  const double ratio = mtt.mean / full.mean;
  const double first = window_mean(res.loss_curve, false), last = window_mean(res.loss_curve, true);
  const double secs = since(t0);
  return {ratio >= 0.85 && last < 0.5 * first && secs < 1800,
          fmt("MTT %.1f%% vs full %.1f%% (%.1f%% of full, need >= 85%%); loss last50/first50 = %.3f (need < 0.5); "
              "%.0fs (budget 1800s)",
              mtt.mean * 100, full.mean * 100, ratio * 100, last / first, secs)};
}

Outcome indicator_table1() {
  const auto t0 = Clock::now();
  const auto report = correlation_report(records_from_results(read_results_csv(CONDENSOR_FIXTURES "/table1_ipc50.csv")));
  bool ok = true;
  std::string wrong;
  auto expect = [&](const char* d, Decision want) {
    const auto* dec = report.decision_for(d, "best");
    if (!dec || dec->decision != want) {
      ok = false;
      wrong += std::string(" ") + d;
    }
  };
  for (const char* d : {"BloodMNIST", "TissueMNIST", "OrganAMNIST", "OrganCMNIST", "OrganSMNIST"})
    expect(d, Decision::distill_further);
  for (const char* d : {"PathMNIST", "DermaMNIST", "OCTMNIST"}) expect(d, Decision::share_random_subset);
  const auto* dc = report.find("dc");
  const auto* mtt = report.find("mtt");
  const bool ordered = dc && mtt && dc->r && mtt->r && *mtt->r > *dc->r;
  const double secs = since(t0);
  return {ok && ordered && secs < 1,
          fmt("r_MTT %.4f > r_DC %.4f: %s; decisions %s; %.3fs", mtt && mtt->r ? *mtt->r : 0.0,
              dc && dc->r ? *dc->r : 0.0, ordered ? "yes" : "no", ok ? "all match" : ("wrong for" + wrong).c_str(), secs)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Wall-clock fields are the only content allowed to differ between runs.
std::string without_runtime(const fs::path& p) {
  const std::string text = slurp(p);
  if (p.extension() == ".json") {
    auto j = nlohmann::json::parse(text);
    j.erase("runtime_s");
    return j.dump();
  }
  if (p.filename() == "results.csv") {
    std::istringstream in(text);
    std::string line, out;
    while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
    return out;
  }
  return text;
}

Outcome reproducibility() {
  const auto t0 = Clock::now();
  const fs::path root = fs::temp_directory_path() / ("condensor_repro_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root / "a");
  fs::create_directories(root / "b");
  std::ofstream(root / "run.cfg") << "seed = 11\n"
                                     "[generate]\ntrain = 160\ntest = 80\nsize = 8\n"
                                     "[data]\ntrain = out/texture_train.mdds\ntest = out/texture_test.mdds\nzca_epsilon = 0.05\n"
                                     "[model]\ndepth = 2\nwidth = 6\n"
                                     "[teachers]\nn_teachers = 2\nepochs = 2\nbatch = 32\n"
                                     "[dc]\nouter_iters = 4\nbatch_real = 16\n"
                                     "[mtt]\nipc = 2\niters = 4\nsyn_steps = 3\nexpert_epochs = 1\n"
                                     "[select]\nipc = 2\n"
                                     "[eval]\nreps = 2\nepochs = 4\ninput = out/dc_ipc1.mdds\n"
                                     "[indicator]\nresults = " CONDENSOR_FIXTURES "/table1_ipc50.csv\n"
                                     "[integrate]\nsources = out/texture_train.mdds,out/texture_test.mdds\nfraction = 0.25\n"
                                     "[aug]\ncrop_pixels = 1\ncutout_pixels = 2\n";
  const std::vector<std::pair<std::string, std::string>> steps{
      {"generate", "manifest_generate.json"},          {"teachers", "manifest_teachers.json"},
      {"distill dc", "manifest_distill_dc.json"},      {"distill mtt", "manifest_distill_mtt.json"},
      {"select", "manifest_select.json"},              {"eval", "manifest_eval_dc_ipc1.json"},
      {"indicator", "manifest_indicator.json"},      {"integrate", "manifest_integrate.json"}};
  const std::string cli = CONDENSOR_CLI;
  int failures = 0;
  for (const auto& [cmd, manifest] : steps) {
    const std::string a = "cd " + (root / "a").string() + " && " + cli + " --log-level warn --config ../run.cfg --out out " + cmd + " > /dev/null";
    const std::string b = "cd " + (root / "b").string() + " && " + cli + " --log-level warn --out out replay ../a/out/" + manifest + " > /dev/null";
    if (std::system(a.c_str()) != 0 || std::system(b.c_str()) != 0) {
      std::cerr << "  step '" << cmd << "' failed\n";
      ++failures;
    }
  }
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(root / "a" / "out")) {
    const auto other = root / "b" / "out" / e.path().filename();
    ++compared;
    if (!fs::exists(other) || without_runtime(e.path()) != without_runtime(other)) {
      std::cerr << "  differs: " << e.path().filename() << "\n";
      ++failures;
    }
  }
  fs::remove_all(root);
  return {failures == 0 && compared >= 20,
          fmt("%zu files compared after config run vs manifest replay, %d mismatches, %.1fs", compared, failures,
              since(t0))};
}

}  // namespace

int main(int argc, char** argv) {
  logging::set_level(logging::Level::error);
  const std::string only = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient oracle suite",
       [] {
         const auto t0 = Clock::now();
         auto c = gradient_suite();
         return suite(c, since(t0), 120);
       }},
      {"algebraic suite",
       [] {
         const auto t0 = Clock::now();
         auto c = algebraic_suite();
         return suite(c, since(t0), 60);
       }},
      {"dc beats random at ipc 1", dc_vs_random},
      {"mtt effectiveness at ipc 10", mtt_effectiveness},
      {"indicator on published ipc 50 means", indicator_table1},
      {"reproducibility", reproducibility},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && name.rfind(only, 0) != 0) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
