// condensor: command-line driver for the distillation pipeline.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "condensor/baseline.hpp"
#include "condensor/config.hpp"
#include "condensor/dc.hpp"
#include "condensor/error.hpp"
#include "condensor/eval.hpp"
#include "condensor/indicator.hpp"
#include "condensor/log.hpp"
#include "condensor/manifest.hpp"
#include "condensor/mtt.hpp"
#include "condensor/selftest.hpp"
#include "condensor/synthetic.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace condensor;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> threads;
  std::string dtype;
  std::vector<std::string> overrides;
  std::string log_level = "info";
};

struct Run {
  Config cfg;
  fs::path out;
  std::uint64_t seed = 0;
  int threads = 1;
  DType dtype = DType::f32;
  RunManifest manifest;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  fs::path output(const std::string& name) const { return out / name; }

  void finish(const std::string& manifest_name) {
    manifest.seed = seed;
    manifest.config = cfg.resolved();
    manifest.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    manifest.write(output(manifest_name));
  }
};

std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_text(const fs::path& p, const std::string& text) {
  write_file(p, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (auto a = item.find_first_not_of(' '); a != std::string::npos) out.push_back(item.substr(a, item.find_last_not_of(' ') - a + 1));
  return out;
}

const std::set<std::string>& schema() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k{"seed", "threads", "dtype", "select.ipc"};
    auto section = [&](const std::string& s, std::initializer_list<const char*> names) {
      for (const char* n : names) k.insert(s + "." + n);
    };
    section("generate", {"classes", "channels", "size", "train", "test", "signal", "noise", "smooth", "name"});
    section("integrate", {"sources", "fraction", "name"});
    section("data", {"train", "test", "resize", "normalization", "zca_epsilon", "name"});
    section("model", {"depth", "width", "norm"});
    section("teachers", {"n_teachers", "epochs", "snapshot_interval", "lr", "momentum", "batch", "aug"});
    section("dc", {"ipc", "outer_iters", "net_resample_every", "inner_steps", "inner_lr", "syn_lr", "batch_real",
                   "distance", "init", "aug"});
    section("mtt", {"teachers_dir", "ipc", "iters", "syn_steps", "expert_epochs", "max_start", "syn_lr", "alpha_lr",
                    "momentum", "alpha_init", "alpha_learnable", "init", "aug"});
    section("eval", {"preset", "reps", "epochs", "lr", "momentum", "batch", "aug", "input", "method", "results"});
    section("indicator", {"results", "decision_ipc", "correlation_ipcs", "welch", "welch_alpha", "random_method"});
    section("aug", {"crop_pixels", "scale_ratio", "rotate_degrees", "brightness", "saturation", "contrast",
                    "cutout_pixels"});
    return k;
  }();
  return keys;
}

Run make_run(const Flags& f, const std::string& subcommand) {
  Run r;
  r.cfg = f.config.empty() ? Config::parse("", "<no config>") : Config::load(f.config);
  for (const auto& o : f.overrides) {
    auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
    r.cfg.set(o.substr(0, eq), o.substr(eq + 1));
  }
  if (f.seed) r.cfg.set("seed", std::to_string(*f.seed));
  if (f.threads) r.cfg.set("threads", std::to_string(*f.threads));
  if (!f.dtype.empty()) r.cfg.set("dtype", f.dtype);
  r.cfg.check_known(schema());
  r.seed = r.cfg.get_u64("seed", 0);
  r.threads = static_cast<int>(r.cfg.get_int("threads", 1));
  if (r.threads < 1) throw ConfigError("key 'threads' must be >= 1", 0, "threads");
  try {
    r.dtype = parse_dtype(r.cfg.get_string("dtype", "f32"));
  } catch (const Error& e) {
    throw ConfigError(std::string(e.what()), 0, "dtype");
  }
  if (!f.out.empty())
    r.out = f.out;
  else if (const char* env = std::getenv("CONDENSOR_OUT"); env && *env)
    r.out = env;
  else
    r.out = "condensor_out";
  fs::create_directories(r.out);
  r.manifest.subcommand = subcommand;
  return r;
}

// Wraps parse functions so a bad enum value names its config key.
template <class F>
auto keyed(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string(e.what()) + " (key '" + key + "')", 0, key);
  }
}

AugPolicy read_aug(Run& r, const std::string& section, const AugPolicy& fallback) {
  AugPolicy p = fallback;
  const std::string list = r.cfg.get_string(section + ".aug", aug_list(fallback));
  p = keyed(section + ".aug", [&] { return parse_aug_list(list, p); });
  p.crop_pixels = r.cfg.get_double("aug.crop_pixels", p.crop_pixels);
  p.scale_ratio = r.cfg.get_double("aug.scale_ratio", p.scale_ratio);
  p.rotate_degrees = r.cfg.get_double("aug.rotate_degrees", p.rotate_degrees);
  p.brightness = r.cfg.get_double("aug.brightness", p.brightness);
  p.saturation = r.cfg.get_double("aug.saturation", p.saturation);
  p.contrast = r.cfg.get_double("aug.contrast", p.contrast);
  p.cutout_pixels = r.cfg.get_double("aug.cutout_pixels", p.cutout_pixels);
  keyed(section + ".aug", [&] { p.validate(); return 0; });
  return p;
}

struct Data {
  Dataset train_raw, test_raw;
  std::optional<Preprocessor> pre;
  TensorSet train, test;
  std::string name;
};

Data load_data(Run& r, bool need_test) {
  Data d;
  const fs::path train_path = r.cfg.require_string("data.train");
  const std::string test_path = need_test ? r.cfg.require_string("data.test") : r.cfg.get_string("data.test", "");
  PreprocessConfig pc;
  pc.resize = r.cfg.get_bool("data.resize", pc.resize);
  pc.normalization = keyed("data.normalization", [&] {
    return parse_normalization(r.cfg.get_string("data.normalization", std::string(normalization_name(pc.normalization))));
  });
  pc.zca_epsilon = r.cfg.get_double("data.zca_epsilon", pc.zca_epsilon);
  pc.dtype = r.dtype;
  d.train_raw = load_dataset(train_path);
  r.manifest.add_input(train_path);
  d.name = r.cfg.get_string("data.name", d.train_raw.name);
  d.pre = Preprocessor::fit(d.train_raw, pc);
  d.train = d.pre->apply(d.train_raw);
  if (need_test) {
    d.test_raw = load_dataset(test_path);
    r.manifest.add_input(test_path);
    if (d.test_raw.n == 0) throw DataError("test split " + test_path + " is empty");
    d.test = d.pre->apply(d.test_raw);
  }
  return d;
}

ModelArch read_arch(Run& r, const TensorSet& train) {
  ModelArch a;
  a.depth = static_cast<int>(r.cfg.get_int("model.depth", a.depth));
  a.width = static_cast<int>(r.cfg.get_int("model.width", a.width));
  a.norm = keyed("model.norm", [&] { return parse_norm(r.cfg.get_string("model.norm", std::string(norm_name(a.norm)))); });
  a.in_channels = static_cast<int>(train.images.dim(1));
  a.in_hw = static_cast<int>(train.images.dim(2));
  a.num_classes = train.num_classes;
  keyed("model.depth", [&] { a.validate(); return 0; });
  r.manifest.conventions["model.pooling"] = "avg";
  r.manifest.conventions["model.in_hw"] = std::to_string(a.in_hw);
  return a;
}

void note_preprocessing(Run& r) {
  r.manifest.conventions["data.resize_method"] = "bilinear, aligned corners";
  r.manifest.conventions["data.statistics"] = "fitted on the training split";
}

// ---- subcommands -----------------------------------------------------------------

int cmd_generate(Run& r) {
  TextureSpec s;
  s.num_classes = static_cast<int>(r.cfg.get_int("generate.classes", s.num_classes));
  s.channels = static_cast<int>(r.cfg.get_int("generate.channels", s.channels));
  s.size = static_cast<int>(r.cfg.get_int("generate.size", s.size));
  s.train = r.cfg.get_int("generate.train", s.train);
  s.test = r.cfg.get_int("generate.test", s.test);
  s.signal = r.cfg.get_double("generate.signal", s.signal);
  s.noise = r.cfg.get_double("generate.noise", s.noise);
  s.smooth = static_cast<int>(r.cfg.get_int("generate.smooth", s.smooth));
  const std::string name = r.cfg.get_string("generate.name", "texture");
  s.seed = r.seed;
  auto [train, test] = make_texture_dataset(s);
  train.name = test.name = name;
  for (const auto& [split, d] : {std::pair{"train", &train}, std::pair{"test", &test}}) {
    const auto p = r.output(name + "_" + split + ".mdds");
    save_dataset(*d, p);
    r.manifest.add_output(p);
  }
  r.finish("manifest_generate.json");
  return 0;
}

int cmd_integrate(Run& r) {
  const auto sources = split_list(r.cfg.require_string("integrate.sources"));
  const double fraction = r.cfg.get_double("integrate.fraction", 0.1);
  const std::string name = r.cfg.get_string("integrate.name", "integrated");
  std::vector<Dataset> ds;
  for (const auto& s : sources) {
    ds.push_back(load_dataset(s));
    r.manifest.add_input(s);
  }
  auto merged = build_integrated_dataset(ds, fraction, r.seed);
  merged.name = name;
  const auto p = r.output(name + ".mdds");
  save_dataset(merged, p);
  r.manifest.add_output(p);
  r.finish("manifest_integrate.json");
  return 0;
}

int cmd_teachers(Run& r) {
  auto data = load_data(r, false);
  const auto arch = read_arch(r, data.train);
  TeacherConfig tc;
  tc.n_teachers = static_cast<int>(r.cfg.get_int("teachers.n_teachers", tc.n_teachers));
  tc.epochs = static_cast<int>(r.cfg.get_int("teachers.epochs", tc.epochs));
  tc.snapshot_interval = static_cast<int>(r.cfg.get_int("teachers.snapshot_interval", tc.snapshot_interval));
  tc.lr = r.cfg.get_double("teachers.lr", tc.lr);
  tc.momentum = r.cfg.get_double("teachers.momentum", tc.momentum);
  tc.batch = r.cfg.get_int("teachers.batch", tc.batch);
  tc.aug = read_aug(r, "teachers", tc.aug);
  if (tc.n_teachers < 1) throw ConfigError("key 'teachers.n_teachers' must be >= 1", 0, "teachers.n_teachers");
  tc.seed = r.seed;
  tc.threads = r.threads;
  note_preprocessing(r);
  const auto buffers = train_teachers(data.train, arch, tc);
  for (std::size_t t = 0; t < buffers.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "teacher_%03zu.mttj", t);
    save_trajectory(buffers[t], r.output(name));
    r.manifest.add_output(r.output(name));
  }
  r.finish("manifest_teachers.json");
  return 0;
}

void write_curve(Run& r, const std::string& name, const std::vector<double>& loss, const std::vector<double>* alpha) {
  std::string text = alpha ? "iter,loss,alpha\n" : "iter,loss\n";
  for (std::size_t i = 0; i < loss.size(); ++i) {
    text += std::to_string(i) + "," + num(loss[i]);
    if (alpha) text += "," + num((*alpha)[i]);
    text += "\n";
  }
  write_text(r.output(name), text);
  r.manifest.add_output(r.output(name));
}

void save_synthetic_output(Run& r, SyntheticDataset s, const Data& data, const std::string& file) {
  s.name = data.name;
  s.class_names = data.train_raw.class_names;
  save_synthetic(s, r.output(file));
  r.manifest.add_output(r.output(file));
}

int cmd_distill_dc(Run& r) {
  auto data = load_data(r, false);
  const auto arch = read_arch(r, data.train);
  DcConfig c;
  c.ipc = static_cast<int>(r.cfg.get_int("dc.ipc", c.ipc));
  c.outer_iters = static_cast<int>(r.cfg.get_int("dc.outer_iters", c.outer_iters));
  c.net_resample_every = static_cast<int>(r.cfg.get_int("dc.net_resample_every", c.net_resample_every));
  c.inner_steps = static_cast<int>(r.cfg.get_int("dc.inner_steps", c.inner_steps));
  c.inner_lr = r.cfg.get_double("dc.inner_lr", c.inner_lr);
  c.syn_lr = r.cfg.get_double("dc.syn_lr", c.syn_lr);
  c.batch_real = static_cast<int>(r.cfg.get_int("dc.batch_real", c.batch_real));
  c.distance = keyed("dc.distance", [&] { return parse_distance(r.cfg.get_string("dc.distance", std::string(distance_name(c.distance)))); });
  c.init = keyed("dc.init", [&] { return parse_init_mode(r.cfg.get_string("dc.init", std::string(init_mode_name(c.init)))); });
  c.aug = read_aug(r, "dc", c.aug);
  c.seed = r.seed;
  note_preprocessing(r);
  auto res = dc_distill(data.train, arch, c);
  save_synthetic_output(r, std::move(res.synthetic), data, "dc_ipc" + std::to_string(c.ipc) + ".mdds");
  write_curve(r, "dc_loss.csv", res.loss_curve, nullptr);
  r.finish("manifest_distill_dc.json");
  return 0;
}

int cmd_distill_mtt(Run& r) {
  auto data = load_data(r, false);
  const auto arch = read_arch(r, data.train);
  fs::path dir = r.cfg.get_string("mtt.teachers_dir", "");
  if (dir.empty()) dir = r.out;
  MttConfig c;
  c.ipc = static_cast<int>(r.cfg.get_int("mtt.ipc", c.ipc));
  c.iters = static_cast<int>(r.cfg.get_int("mtt.iters", c.iters));
  c.syn_steps = static_cast<int>(r.cfg.get_int("mtt.syn_steps", c.syn_steps));
  c.expert_epochs = static_cast<int>(r.cfg.get_int("mtt.expert_epochs", c.expert_epochs));
  c.max_start = static_cast<int>(r.cfg.get_int("mtt.max_start", c.max_start));
  c.syn_lr = r.cfg.get_double("mtt.syn_lr", c.syn_lr);
  c.alpha_lr = r.cfg.get_double("mtt.alpha_lr", c.alpha_lr);
  c.momentum = r.cfg.get_double("mtt.momentum", c.momentum);
  c.alpha_init = r.cfg.get_double("mtt.alpha_init", c.alpha_init);
  c.alpha_learnable = r.cfg.get_bool("mtt.alpha_learnable", c.alpha_learnable);
  c.init = keyed("mtt.init", [&] { return parse_init_mode(r.cfg.get_string("mtt.init", std::string(init_mode_name(c.init)))); });
  c.aug = read_aug(r, "mtt", c.aug);
  c.seed = r.seed;

  std::vector<fs::path> files;
  if (fs::is_directory(dir))
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".mttj") files.push_back(e.path());
  if (files.empty())
    throw DataError("no teacher trajectories (*.mttj) in " + dir.string() +
                    "; run `condensor teachers` first or set mtt.teachers_dir");
  std::sort(files.begin(), files.end());
  std::vector<TrajectoryBuffer> buffers;
  for (const auto& f : files) {
    buffers.push_back(load_trajectory(f));
    buffers.back().arch.norm = arch.norm;
    r.manifest.add_input(f);
  }
  note_preprocessing(r);
  auto res = mtt_distill(buffers, data.train, arch, c);
  save_synthetic_output(r, std::move(res.synthetic), data, "mtt_ipc" + std::to_string(c.ipc) + ".mdds");
  write_curve(r, "mtt_loss.csv", res.loss_curve, &res.alpha_curve);
  r.manifest.conventions["mtt.skipped_samples"] = std::to_string(res.skipped);
  r.finish("manifest_distill_mtt.json");
  return 0;
}

int cmd_select(Run& r) {
  const fs::path train_path = r.cfg.require_string("data.train");
  const int ipc = static_cast<int>(r.cfg.get_int("select.ipc", 1));
  auto train = load_dataset(train_path);
  r.manifest.add_input(train_path);
  auto sel = random_select(train, ipc, r.seed);
  const auto p = r.output("random_ipc" + std::to_string(ipc) + ".mdds");
  save_dataset(sel, p);
  r.manifest.add_output(p);
  r.finish("manifest_select.json");
  return 0;
}

int cmd_eval(Run& r) {
  auto data = load_data(r, true);
  const auto arch = read_arch(r, data.train);
  const std::string preset = r.cfg.get_string("eval.preset", "desk");
  if (preset != "desk" && preset != "paper")
    throw ConfigError("key 'eval.preset': expected desk or paper, got '" + preset + "'", 0, "eval.preset");
  EvalConfig ec = preset == "paper" ? EvalConfig::paper() : EvalConfig{};
  ec.reps = static_cast<int>(r.cfg.get_int("eval.reps", ec.reps));
  ec.epochs = static_cast<int>(r.cfg.get_int("eval.epochs", ec.epochs));
  ec.lr = r.cfg.get_double("eval.lr", ec.lr);
  ec.momentum = r.cfg.get_double("eval.momentum", ec.momentum);
  ec.batch = r.cfg.get_int("eval.batch", ec.batch);
  ec.aug = read_aug(r, "eval", ec.aug);
  const std::string input = r.cfg.require_string("eval.input");
  std::string method = r.cfg.get_string("eval.method", "");
  fs::path results = r.cfg.get_string("eval.results", "");
  if (results.empty()) results = r.output("results.csv");
  ec.seed = r.seed;
  ec.threads = r.threads;

  TensorSet small;
  int ipc = 0;
  if (input == "full") {
    small = data.train;
    if (method.empty()) method = "full";
  } else {
    r.manifest.add_input(input);
    if (peek_mdds_kind(input) == MddsKind::f32) {
      auto s = load_synthetic(input);
      if (s.images.dim(1) != arch.in_channels || s.images.dim(2) != arch.in_hw)
        throw DataError(input + ": synthetic images " + shape_str(s.images.shape()) + " do not match the test split");
      small = s.as_set();
      small.images = small.images.astype(r.dtype);
      ipc = s.ipc;
      if (method.empty()) method = fs::path(input).stem().string().substr(0, fs::path(input).stem().string().find('_'));
    } else {
      auto d = load_dataset(input);
      small = data.pre->apply(d);
      ipc = static_cast<int>(d.n / std::max(1, d.num_classes));
      if (method.empty()) method = "random";
    }
  }
  note_preprocessing(r);
  auto stats = evaluate(small, data.test, arch, ec, ipc);
  append_results_csv(results, result_rows(stats, data.name, method, ipc));
  r.manifest.conventions["eval.batch"] = std::to_string(stats.batch);
  r.manifest.conventions["eval.preset"] = preset;
  r.manifest.outputs[results.string()] = "appended";
  r.finish("manifest_eval_" + method + "_ipc" + std::to_string(ipc) + ".json");
  std::cout << data.name << " " << method << " ipc " << ipc << ": " << num(stats.mean) << " +- " << num(stats.std)
            << " (batch " << stats.batch << ")\n";
  return 0;
}

int cmd_indicator(Run& r, const std::string& results_flag) {
  if (!results_flag.empty()) r.cfg.set("indicator.results", results_flag);
  const std::string results = r.cfg.require_string("indicator.results");
  ReportOptions opts;
  opts.decision_ipc = static_cast<int>(r.cfg.get_int("indicator.decision_ipc", opts.decision_ipc));
  for (const auto& s : split_list(r.cfg.get_string("indicator.correlation_ipcs", "")))
    opts.correlation_ipcs.push_back(keyed("indicator.correlation_ipcs", [&] { return std::stoi(s); }));
  opts.welch = r.cfg.get_bool("indicator.welch", opts.welch);
  opts.welch_alpha = r.cfg.get_double("indicator.welch_alpha", opts.welch_alpha);
  const std::string random_method = r.cfg.get_string("indicator.random_method", "random");
  r.manifest.add_input(results);
  const auto records = records_from_results(read_results_csv(results), random_method);
  std::set<std::string> datasets;
  for (const auto& rec : records) datasets.insert(rec.dataset);
  const auto report = correlation_report(records, opts);
  write_text(r.output("indicator_report.csv"), report_csv(report));
  write_text(r.output("indicator_scatter.svg"), report_svg(report));
  r.manifest.add_output(r.output("indicator_report.csv"));
  r.manifest.add_output(r.output("indicator_scatter.svg"));
  r.manifest.conventions["indicator.point_set"] = report.point_set;
  r.finish("manifest_indicator.json");

  for (const auto& s : report.series)
    std::cout << s.method << ": " << (s.r ? "r = " + num(*s.r) : s.error) << "\n";
  for (const auto& d : report.decisions)
    if (d.method == "best") std::cout << d.dataset << ": " << decision_name(d.decision) << "\n";
  if (datasets.size() < 2)
    throw DataError("degenerate correlation input: " + std::to_string(datasets.size()) +
                    " dataset(s) paired with random-selection rows in " + results);
  for (const auto& s : report.series)
    if (!s.r) throw DataError("series " + s.method + ": " + s.error);
  return 0;
}

int cmd_selftest(bool quick, const std::vector<std::string>& files) {
  std::vector<CheckResult> all;
  if (!quick) {
    auto g = gradient_suite();
    all.insert(all.end(), g.begin(), g.end());
  }
  auto a = algebraic_suite();
  all.insert(all.end(), a.begin(), a.end());
  auto f = format_suite({files.begin(), files.end()});
  all.insert(all.end(), f.begin(), f.end());
  int failed = 0;
  for (const auto& c : all) {
    std::cout << format_check(c) << "\n";
    failed += !c.pass;
  }
  std::cout << all.size() - static_cast<std::size_t>(failed) << "/" << all.size() << " checks passed\n";
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"condensor: dataset distillation and the share-or-distill indicator"};
  Flags f;
  app.add_option("--config", f.config, "run config (key = value, [sections])");
  app.add_option("--seed", f.seed, "run seed (overrides config)");
  app.add_option("--out", f.out, "output directory (default $CONDENSOR_OUT, else ./condensor_out)");
  app.add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--dtype", f.dtype, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
  app.add_option("--set", f.overrides, "override a config key, e.g. --set dc.ipc=10");
  app.add_option("--log-level", f.log_level, "debug, info, warn, error or off")
      ->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}));
  app.require_subcommand(1);

  app.add_subcommand("generate", "write a synthetic texture dataset (train/test MDDS)");
  app.add_subcommand("integrate", "merge datasets into one whose classes are the sources");
  app.add_subcommand("teachers", "train teacher networks and record trajectories");
  auto* distill = app.add_subcommand("distill", "learn a synthetic set");
  std::string method;
  distill->add_option("method", method, "dc or mtt")->required()->check(CLI::IsMember({"dc", "mtt"}));
  app.add_subcommand("select", "class-balanced random subset");
  app.add_subcommand("eval", "train from scratch on a small set, append accuracies");
  auto* indicator = app.add_subcommand("indicator", "correlation report and sharing decisions");
  std::string results;
  indicator->add_option("results", results, "results CSV");
  auto* selftest = app.add_subcommand("selftest", "gradient, algebra and format checks");
  bool quick = false;
  std::vector<std::string> check_files;
  selftest->add_flag("--quick", quick, "skip the finite-difference suite");
  selftest->add_option("--check-file", check_files, "also verify these MDDS/MTTJ files");
  auto* replay = app.add_subcommand("replay", "re-run the command recorded in a manifest");
  std::string manifest_path;
  replay->add_option("manifest", manifest_path)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    static const std::map<std::string, logging::Level> levels{{"debug", logging::Level::debug}, {"info", logging::Level::info},
                                                               {"warn", logging::Level::warn}, {"error", logging::Level::error},
                                                               {"off", logging::Level::off}};
    logging::set_level(levels.at(f.log_level));
    std::string sub = app.get_subcommands().front()->get_name();
    if (sub == "replay") {
      const auto j = nlohmann::json::parse(std::ifstream(manifest_path));
      sub = j.at("subcommand").get<std::string>();
      f.config.clear();
      f.seed.reset();
      f.threads.reset();
      f.dtype.clear();
      std::vector<std::string> keep;
      for (const auto& [k, v] : j.at("config").items()) keep.push_back(k + "=" + v.get<std::string>());
      keep.insert(keep.end(), f.overrides.begin(), f.overrides.end());
      f.overrides = keep;
      if (sub.rfind("distill ", 0) == 0) {
        method = sub.substr(8);
        sub = "distill";
      }
    }
    if (sub == "selftest") return cmd_selftest(quick, check_files);
    Run r = make_run(f, sub == "distill" ? "distill " + method : sub);
    if (sub == "generate") return cmd_generate(r);
    if (sub == "integrate") return cmd_integrate(r);
    if (sub == "teachers") return cmd_teachers(r);
    if (sub == "distill") return method == "dc" ? cmd_distill_dc(r) : cmd_distill_mtt(r);
    if (sub == "select") return cmd_select(r);
    if (sub == "eval") return cmd_eval(r);
    if (sub == "indicator") return cmd_indicator(r, results);
    throw Error("unknown subcommand " + sub);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
