#include "cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "granlab/checkpoint.hpp"
#include "granlab/gam.hpp"
#include "granlab/image_io.hpp"
#include "granlab/presets.hpp"
#include "granlab/verify.hpp"

namespace granlab::cli {

namespace {

namespace fs = std::filesystem;

// One resolvable setting. `flag` is empty for positional arguments; an
// empty fallback means "taken from the preset or the checkpoint".
struct KeySpec {
  std::string key;
  std::string flag;
  std::string fallback;
  std::string help;
};

struct Command {
  std::string name;
  std::string help;
  std::vector<KeySpec> keys;
};

const std::vector<KeySpec> kShared = {
    {"seed", "--seed", "0", "run seed"},
    {"out", "--out", "granlab_out", "output directory"},
};

std::vector<Command> commands() {
  auto with_shared = [](std::vector<KeySpec> keys) {
    keys.insert(keys.begin(), kShared.begin(), kShared.end());
    return keys;
  };
  return {
      {"train", "train a generator/discriminator pair",
       with_shared({
           {"dataset", "--dataset", "ring", "mnist:DIR, ring or shapes"},
           {"data_seed", "--data-seed", std::to_string(kDefaultDataSeed), "synthetic data seed"},
           {"steps", "--steps", "3", "recurrent steps T"},
           {"noise", "--noise", "shared", "shared or per-step"},
           {"iters", "--iters", "", "training iterations"},
           {"lr_d", "--lr-d", "", "discriminator learning rate"},
           {"lr_g", "--lr-g", "", "generator learning rate"},
           {"policy", "--policy", "", "always or conditional"},
           {"batch_size", "--batch-size", "100", "examples per batch"},
           {"sample_count", "--sample-count", "64", "samples written after training"},
           {"sample_seed", "--sample-seed", "7", "noise seed for the written samples"},
       })},
      {"sample", "draw samples and per-step canvases from a checkpoint",
       with_shared({
           {"checkpoint", "", "", "checkpoint file"},
           {"count", "--count", "64", "number of samples"},
       })},
      {"battle", "GAM battle between two checkpoints",
       with_shared({
           {"model1", "", "", "checkpoint of M1"},
           {"model2", "", "", "checkpoint of M2"},
           {"dataset", "--dataset", "", "reals; defaults to the one M1 was trained on"},
           {"data_seed", "--data-seed", "", "synthetic data seed; defaults to M1's"},
           {"n", "--n", "0", "samples per generator; 0 means the test-set size"},
           {"delta", "--delta", "0.3", "tolerance on r_test"},
           {"label1", "--label1", "", "name of M1 in the report"},
           {"label2", "--label2", "", "name of M2 in the report"},
       })},
      {"cross-eval", "score external samples with a checkpoint's discriminator",
       with_shared({
           {"checkpoint", "", "", "checkpoint file"},
           {"samples", "", "", "sample container, PGM/PPM file or directory"},
       })},
      {"verify", "run a verification suite",
       with_shared({
           {"suite", "", "", "convoracle, gradcheck or gam"},
       })},
  };
}

std::string key_list(const Command& c) {
  std::string s;
  for (const auto& k : c.keys) s += (s.empty() ? "" : ", ") + k.key;
  return s;
}

// Defaults, then the config file, then the flags given on the command line.
KeyValues resolve(const Command& c, const std::string& config_path, const KeyValues& flags) {
  KeyValues kv;
  for (const auto& k : c.keys) kv.set(k.key, k.fallback);
  if (!config_path.empty()) {
    const KeyValues file = KeyValues::load(config_path);
    for (const auto& key : file.keys()) {
      const bool known = std::any_of(c.keys.begin(), c.keys.end(),
                                     [&](const KeySpec& k) { return k.key == key; });
      if (!known) {
        throw UsageError("unknown config key '" + key + "' for " + c.name +
                         "; valid keys: " + key_list(c));
      }
    }
    kv.merge(file);
  }
  kv.merge(flags);
  return kv;
}

std::string require_value(const KeyValues& kv, const std::string& key, const std::string& cmd) {
  const std::string v = kv.get_string(key, "");
  if (v.empty()) throw UsageError(cmd + ": missing " + key);
  return v;
}

fs::path prepare_out(const KeyValues& kv) {
  const fs::path out = kv.require("out");
  fs::create_directories(out);
  return out;
}

template <typename T>
Tensor<T> sigmoid_of(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x[i]))));
  }
  return y;
}

// Per-step canvases sigma(delta_1 + ... + delta_t) for the first rows.
std::vector<Tensor<float>> step_canvases(const Generation<float>& gen, std::size_t rows) {
  std::vector<Tensor<float>> out;
  std::optional<Tensor<float>> total;
  for (const auto& d : gen.deltas) {
    const Tensor<float> part = take_rows(d, 0, rows);
    if (!total) {
      total = part;
    } else {
      for (std::size_t i = 0; i < total->size(); ++i) (*total)[i] += part[i];
    }
    out.push_back(sigmoid_of(*total));
  }
  // The last step is the canvas itself; reuse it so the two agree bit for bit.
  if (!out.empty()) out.back() = take_rows(gen.canvas, 0, rows);
  return out;
}

void write_points_csv(const fs::path& path, const Tensor<float>& points) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f << "x,y\n";
  for (std::size_t i = 0; i < points.dim(0); ++i) {
    f << format_real(points[2 * i]) << ',' << format_real(points[2 * i + 1]) << '\n';
  }
}

// Final samples and per-step canvases: PGM/PPM grids for image canvases,
// CSV for 2D points.
void write_samples(const fs::path& out, GranGenerator<float>& gen, std::size_t count,
                   std::uint64_t seed) {
  const Generation<float> g = generate(gen, count, seed);
  save_samples(out / "samples.grn", g.canvas);
  const std::size_t rows = std::min<std::size_t>(count, 8);
  const auto steps = step_canvases(g, rows);
  if (gen.config.canvas.size() == 3) {
    write_pnm((out / "samples.pgm").string(), tile_grid(g.canvas));
    // One row per sample, one column per step.
    Shape shape{rows * steps.size()};
    shape.insert(shape.end(), gen.config.canvas.begin(), gen.config.canvas.end());
    Tensor<float> grid(shape);
    const std::size_t per = shape_size(gen.config.canvas);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t t = 0; t < steps.size(); ++t)
        std::copy_n(steps[t].data().begin() + r * per, per,
                    grid.data().begin() + (r * steps.size() + t) * per);
    write_pnm((out / "steps.pgm").string(), tile_grid(grid, steps.size()));
  } else if (gen.config.canvas == Shape{2}) {
    write_points_csv(out / "samples.csv", g.canvas);
    std::ofstream f(out / "steps.csv");
    f << "sample,step,x,y\n";
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t t = 0; t < steps.size(); ++t)
        f << r << ',' << t + 1 << ',' << format_real(steps[t][2 * r]) << ','
          << format_real(steps[t][2 * r + 1]) << '\n';
  }
}

int cmd_train(const KeyValues& in, std::ostream& out) {
  KeyValues kv = in;
  const DatasetSpec spec = DatasetSpec::parse(kv.require("dataset"));
  const std::uint64_t seed = kv.get_u64("seed", 0);
  const std::size_t steps = kv.get_size("steps", 3);
  Preset p = make_preset(spec.kind, steps, parse_noise_mode(kv.require("noise")));
  TrainConfig& tc = p.train;
  if (!kv.require("iters").empty()) tc.iterations = kv.get_size("iters", 0);
  if (!kv.require("lr_d").empty()) tc.lr_d = kv.get_double("lr_d", 0);
  if (!kv.require("lr_g").empty()) tc.lr_g = kv.get_double("lr_g", 0);
  tc.batch_size = kv.get_size("batch_size", tc.batch_size);
  if (!kv.require("policy").empty()) tc.policy = parse_policy(kv.require("policy"));
  tc.seed = seed;
  tc.validate();
  kv.set("iters", tc.iterations);
  kv.set("lr_d", tc.lr_d);
  kv.set("lr_g", tc.lr_g);
  kv.set("policy", to_string(tc.policy));

  const fs::path dir = prepare_out(kv);
  kv.save((dir / "config.txt").string());

  const std::uint64_t data_seed = kv.get_u64("data_seed", kDefaultDataSeed);
  const auto data = load_dataset<float>(spec, data_seed);
  if (data.train.example_shape() != p.gen.canvas) {
    throw ContractError("dataset examples " + shape_string(data.train.example_shape()) +
                        " do not match canvas " + shape_string(p.gen.canvas));
  }
  auto gen = GranGenerator<float>::init(p.gen, gen_init_seed(seed));
  auto disc = Discriminator<float>::init(p.disc, disc_init_seed(seed));
  const auto result = train(gen, disc, data.train.x, tc);

  KeyValues meta;
  meta.set("dataset", spec.to_string());
  meta.set("data_seed", std::to_string(data_seed));
  meta.set("seed", std::to_string(seed));
  tc.write(meta);
  const bool trained = tc.iterations > 0;
  save_checkpoint((dir / "model.grn").string(), gen, disc, trained ? &result.adam_g : nullptr,
                  trained ? &result.adam_d : nullptr, meta);
  result.trace.save_csv((dir / "trace.csv").string());
  write_samples(dir, gen, kv.get_size("sample_count", 64), kv.get_u64("sample_seed", 7));

  out << "trained GRAN" << steps << " on " << spec.to_string() << " for " << tc.iterations
      << " iterations";
  if (trained) {
    const TrainRow& last = result.trace.rows.back();
    out << "; final d_loss " << format_real(last.d_loss) << ", g_loss "
        << format_real(last.g_loss);
  }
  out << "\nwrote " << dir.string() << '\n';
  return kExitOk;
}

int cmd_sample(const KeyValues& kv, std::ostream& out) {
  const std::string path = require_value(kv, "checkpoint", "sample");
  auto bundle = load_checkpoint<float>(path);
  const fs::path dir = prepare_out(kv);
  kv.save((dir / "config.txt").string());
  const std::size_t count = kv.get_size("count", 64);
  if (count == 0) throw UsageError("sample: count must be >= 1");
  write_samples(dir, bundle.gen, count, kv.get_u64("seed", 0));
  out << "wrote " << count << " samples to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_battle(const KeyValues& in, std::ostream& out) {
  KeyValues kv = in;
  const std::string p1 = require_value(kv, "model1", "battle");
  const std::string p2 = require_value(kv, "model2", "battle");
  auto m1 = load_checkpoint<float>(p1);
  auto m2 = load_checkpoint<float>(p2);
  if (kv.get_string("dataset", "").empty()) {
    kv.set("dataset", m1.extra.get_string("dataset", ""));
    if (kv.require("dataset").empty()) {
      throw UsageError("battle: " + p1 + " records no dataset; pass --dataset");
    }
  }
  if (kv.get_string("data_seed", "").empty()) {
    kv.set("data_seed", m1.extra.get_string("data_seed", std::to_string(kDefaultDataSeed)));
  }
  if (kv.get_string("label1", "").empty()) kv.set("label1", fs::path(p1).stem().string());
  if (kv.get_string("label2", "").empty()) kv.set("label2", fs::path(p2).stem().string());
  const auto data =
      load_dataset<float>(DatasetSpec::parse(kv.require("dataset")), kv.get_u64("data_seed", 0));
  std::size_t n = kv.get_size("n", 0);
  if (n == 0) n = data.test.size();
  kv.set("n", n);

  const fs::path dir = prepare_out(kv);
  kv.save((dir / "config.txt").string());
  const BattleReport report =
      battle<float>({m1.gen, m1.disc, kv.require("label1")}, {m2.gen, m2.disc, kv.require("label2")},
                    data.train.x, data.test.x, n, kv.get_u64("seed", 0));
  const GamVerdict v = judge(report, kv.get_double("delta", kDefaultDelta));
  const KeyValues r = report_kv(report, v);
  r.save((dir / "report.txt").string());
  out << r.serialize();
  return kExitOk;
}

int cmd_cross_eval(const KeyValues& kv, std::ostream& out) {
  const std::string ckpt = require_value(kv, "checkpoint", "cross-eval");
  const std::string samples_path = require_value(kv, "samples", "cross-eval");
  auto bundle = load_checkpoint<float>(ckpt);
  const Tensor<float> samples = load_samples<float>(samples_path);
  const double rate = cross_model_error(bundle.disc, samples);
  const fs::path dir = prepare_out(kv);
  kv.save((dir / "config.txt").string());
  KeyValues r;
  r.set("checkpoint", ckpt);
  r.set("samples", samples_path);
  r.set("count", samples.dim(0));
  r.set("cross_model_error", rate);
  r.save((dir / "cross_eval.txt").string());
  out << "cross_model_error=" << format_real(rate) << '\n';
  return kExitOk;
}

bool wide_precision() {
  const char* env = std::getenv("GRANLAB_PRECISION");
  const std::string p = env ? env : "standard";
  if (p == "standard") return false;
  if (p == "wide") return true;
  throw UsageError("GRANLAB_PRECISION must be standard or wide, got '" + p + "'");
}

int cmd_verify(const KeyValues& kv, std::ostream& out) {
  const std::string suite = require_value(kv, "suite", "verify");
  const bool wide = wide_precision();
  const SuiteResult r = run_suite(suite, wide);
  out << "suite " << suite << " (" << (wide ? "wide" : "standard") << " precision)\n"
      << format_suite(r);
  return r.passed() ? kExitOk : kExitFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"GRAN training and generative adversarial metric toolkit", "granlab"};
  app.require_subcommand(1);
  const auto cmds = commands();

  struct Bound {
    CLI::App* app;
    const Command* cmd;
    std::string config;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
  };
  std::vector<Bound> bound(cmds.size());
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    Bound& b = bound[i];
    b.cmd = &cmds[i];
    b.app = app.add_subcommand(cmds[i].name, cmds[i].help);
    b.app->add_option("--config", b.config, "key=value config file");
    for (const auto& k : cmds[i].keys) {
      std::string& slot = b.values[k.key];
      b.options[k.key] = b.app->add_option(k.flag.empty() ? k.key : k.flag, slot, k.help);
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    // Renders the selected subcommand's help when there is one.
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    for (auto& b : bound) {
      if (!b.app->parsed()) continue;
      KeyValues flags;
      for (const auto& [key, opt] : b.options) {
        if (opt->count() > 0) flags.set(key, b.values[key]);
      }
      const KeyValues kv = resolve(*b.cmd, b.config, flags);
      const std::string& name = b.cmd->name;
      if (name == "train") return cmd_train(kv, out);
      if (name == "sample") return cmd_sample(kv, out);
      if (name == "battle") return cmd_battle(kv, out);
      if (name == "cross-eval") return cmd_cross_eval(kv, out);
      return cmd_verify(kv, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace granlab::cli
