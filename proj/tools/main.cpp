// mklstm command-line driver: dataset generation, training, evaluation, and
// the analysis/diagnostic reports. Every subcommand reads a key=value config
// file plus flag overrides and writes config.resolved into its run directory.

#include <malloc.h>

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mklstm/analysis.hpp"
#include "mklstm/config.hpp"
#include "mklstm/gradcheck.hpp"
#include "mklstm/io.hpp"
#include "mklstm/moving_mnist.hpp"
#include "mklstm/predictor.hpp"
#include "mklstm/train.hpp"

using namespace mklstm;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string run_dir;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonArgs& args, const std::string& default_dir) {
  cmd->add_option("--config", args.config_path, "key=value config file");
  cmd->add_option("--run-dir", args.run_dir, "output directory")
      ->default_val(default_dir);
  cmd->add_option("--set", args.sets, "override a config key (key=value)");
}

ConfigMap resolve_config(const CommonArgs& args) {
  ConfigMap cfg;
  if (!args.config_path.empty()) cfg = ConfigMap::load(args.config_path);
  for (const std::string& kv : args.sets) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

void write_resolved(const ConfigMap& cfg, const std::string& run_dir) {
  io::make_dirs(run_dir);
  io::write_text_file(run_dir + "/config.resolved", cfg.resolved_text());
}

GeneratorConfig generator_from(const ConfigMap& cfg) {
  GeneratorConfig gen;
  gen.canvas = cfg.get_int("canvas", gen.canvas);
  gen.digit_size = cfg.get_int("digit_size", gen.digit_size);
  gen.frames = cfg.get_int("frames", gen.frames);
  gen.num_digits = cfg.get_int("num_digits", gen.num_digits);
  gen.speeds = cfg.get_doubles("speeds", gen.speeds);
  gen.jitter = cfg.get_double("jitter", gen.jitter);
  gen.directions = cfg.get_doubles("directions", gen.directions);
  gen.seed = cfg.get_u64("seed", gen.seed);
  gen.patch = cfg.get_int("patch", gen.patch);
  if (int(gen.speeds.size()) != gen.num_digits && gen.speeds.size() == 1)
    gen.speeds.assign(std::size_t(gen.num_digits), gen.speeds[0]);
  return gen;
}

IdxImages digits_from(const ConfigMap& cfg) {
  const std::string source = cfg.get_str("digits", "synthetic");
  const int size = cfg.get_int("digit_size", 22);
  if (source == "synthetic") {
    return crop_center(
        synthetic_digits(cfg.get_int("digit_variants", 20),
                         cfg.get_u64("digit_bank_seed", 20240101)),
        size);
  }
  if (source == "idx")
    return crop_center(load_idx_images(cfg.require_str("mnist_path")), size);
  throw std::runtime_error("config: digits must be 'synthetic' or 'idx', got " +
                           source);
}

Peephole peephole_from(const ConfigMap& cfg) {
  const std::string p = cfg.get_str("peephole", "per_channel");
  if (p == "none") return Peephole::none;
  if (p == "per_channel") return Peephole::per_channel;
  if (p == "full_state") return Peephole::full_state;
  throw std::runtime_error("config: unknown peephole mode " + p);
}

MultiKernelSpec spec_from(const ConfigMap& cfg) {
  MultiKernelSpec spec;
  const std::vector<int> kernels = cfg.get_ints("kernels", {3});
  const std::vector<int> channels =
      cfg.get_ints("channels", std::vector<int>(kernels.size(), 32));
  const std::vector<int> bottlenecks =
      cfg.get_ints("bottlenecks", std::vector<int>(kernels.size(), 0));
  const std::vector<int> attended =
      cfg.get_ints("attended", std::vector<int>(kernels.size(), 0));
  if (channels.size() != kernels.size() || bottlenecks.size() != kernels.size() ||
      attended.size() != kernels.size())
    throw std::runtime_error(
        "config: kernels/channels/bottlenecks/attended lengths differ");
  for (std::size_t i = 0; i < kernels.size(); ++i)
    spec.branches.push_back(Branch{kernels[i], channels[i], bottlenecks[i],
                                   attended[i] != 0});
  const std::string fusion = cfg.get_str("fusion", "interleave");
  if (fusion == "one_by_one") {
    spec.fusion = Fusion::one_by_one;
    spec.out_channels = cfg.get_int("out_channels", spec.sum_branch_channels());
    spec.fusion_tanh = cfg.get_bool("fusion_tanh", false);
  } else if (fusion != "interleave") {
    throw std::runtime_error("config: unknown fusion " + fusion);
  }
  return spec;
}

PredictorConfig predictor_from(const ConfigMap& cfg, const GeneratorConfig& gen) {
  PredictorConfig pc;
  pc.t_in = cfg.get_int("t_in", 10);
  pc.t_out = cfg.get_int("t_out", 10);
  pc.height = gen.canvas / gen.patch;
  pc.width = gen.canvas / gen.patch;
  pc.in_channels = gen.patch * gen.patch;
  pc.spec = spec_from(cfg);
  pc.peephole = peephole_from(cfg);
  pc.decoder_feedback = cfg.get_str("decoder_input", "zeros") == "feedback";
  if (pc.attention()) pc.flow_channels = 2 * gen.patch * gen.patch;
  return pc;
}

// "k:C[+k:C...][@out[:tanh]]", e.g. "3:32", "3:16+5:16", "3:16+5:16@32:tanh"
MultiKernelSpec parse_spec_item(const std::string& item) {
  MultiKernelSpec spec;
  std::string body = item, fusion;
  const std::size_t at = item.find('@');
  if (at != std::string::npos) {
    body = item.substr(0, at);
    fusion = item.substr(at + 1);
  }
  std::istringstream bs(body);
  std::string part;
  while (std::getline(bs, part, '+')) {
    const std::size_t colon = part.find(':');
    if (colon == std::string::npos)
      throw std::runtime_error("sweep config item '" + item +
                               "': branch must be k:channels");
    spec.branches.push_back(
        Branch{std::stoi(part.substr(0, colon)),
               std::stoi(part.substr(colon + 1)), 0, false});
  }
  if (!fusion.empty()) {
    spec.fusion = Fusion::one_by_one;
    const std::size_t colon = fusion.find(':');
    spec.out_channels = std::stoi(fusion.substr(0, colon));
    spec.fusion_tanh = colon != std::string::npos &&
                       fusion.substr(colon + 1) == "tanh";
  }
  return spec;
}

FitConfig fit_from(const ConfigMap& cfg, const std::string& run_dir) {
  FitConfig fc;
  fc.epochs = cfg.get_int("epochs", 20);
  fc.batch = cfg.get_int("batch", 8);
  fc.adam.lr = cfg.get_double("lr", 1e-3);
  fc.adam.beta1 = cfg.get_double("beta1", 0.9);
  fc.adam.beta2 = cfg.get_double("beta2", 0.999);
  fc.clip_norm = cfg.get_double("clip_norm", 10.0);
  fc.seed = cfg.get_u64("fit_seed", 1);
  fc.run_dir = run_dir;
  fc.run_id = cfg.get_str("run_id", "run");
  fc.resume = cfg.get_bool("resume", false);
  fc.keep_epoch_checkpoints = cfg.get_bool("keep_epoch_checkpoints", true);
  fc.config_text = cfg.resolved_text();
  return fc;
}

int cmd_gen_data(const CommonArgs& args) {
  ConfigMap cfg = resolve_config(args);
  write_resolved(cfg, args.run_dir);
  GeneratorConfig gen = generator_from(cfg);
  IdxImages digits = digits_from(cfg);
  const int count = cfg.get_int("count", 100);
  std::vector<SequenceSample> samples;
  samples.reserve(std::size_t(count));
  for (int i = 0; i < count; ++i) {
    GeneratorConfig c = gen;
    c.seed = Rng::derive(gen.seed, std::uint64_t(i));
    samples.push_back(generate_sequence(c, digits));
  }
  const std::string out =
      cfg.get_str("out", args.run_dir + "/dataset.mkds");
  write_dataset(out, gen, samples);
  const int pgm = cfg.get_int("pgm_samples", 0);
  for (int i = 0; i < std::min(pgm, count); ++i)
    dump_frames_pgm(args.run_dir + "/pgm", "sample" + std::to_string(i),
                    samples[std::size_t(i)]);
  std::cout << "wrote " << count << " sequences to " << out << "\n";
  return 0;
}

template <typename T>
int train_impl(const ConfigMap& cfg, const std::string& run_dir) {
  GeneratorConfig gen = generator_from(cfg);
  IdxImages digits = digits_from(cfg);
  PredictorConfig pc = predictor_from(cfg, gen);
  const int train_size = cfg.get_int("train_size", 100);
  const int test_size = cfg.get_int("test_size", 20);
  ExperimentData data =
      build_datasets(gen, train_size, test_size, cfg.get_u64("data_seed", 11),
                     digits, pc.attention());
  SeqDataset<T> train_set, test_set;
  if constexpr (std::is_same_v<T, float>) {
    train_set = std::move(data.train);
    test_set = std::move(data.test);
  } else {
    for (const auto& f : data.train.frames)
      train_set.frames.push_back(f.template cast<T>());
    for (const auto& f : data.train.flows)
      train_set.flows.push_back(f.template cast<T>());
    for (const auto& f : data.test.frames)
      test_set.frames.push_back(f.template cast<T>());
    for (const auto& f : data.test.flows)
      test_set.flows.push_back(f.template cast<T>());
  }
  PredictorParams<T> model =
      make_predictor<T>(pc, cfg.get_u64("model_seed", cfg.get_u64("fit_seed", 1)));
  FitResult<T> result = fit(model, train_set, test_set, fit_from(cfg, run_dir));
  std::cout << "final test sce_sum=" << result.final_test_sce << " per_pixel="
            << result.final_test_sce / double(prediction_elements(pc)) << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args) {
  ConfigMap cfg = resolve_config(args);
  write_resolved(cfg, args.run_dir);
  const std::string precision = cfg.get_str("precision", "f32");
  if (precision == "f64") return train_impl<double>(cfg, args.run_dir);
  if (precision != "f32")
    throw std::runtime_error("config: precision must be f32 or f64");
  return train_impl<float>(cfg, args.run_dir);
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint) {
  ConfigMap cfg = resolve_config(args);
  write_resolved(cfg, args.run_dir);
  GeneratorConfig gen = generator_from(cfg);
  IdxImages digits = digits_from(cfg);
  PredictorConfig pc = predictor_from(cfg, gen);
  ExperimentData data =
      build_datasets(gen, 0, cfg.get_int("test_size", 20),
                     cfg.get_u64("data_seed", 11), digits, pc.attention());
  PredictorParams<float> model = make_predictor<float>(pc, 0);
  auto refs = predictor_param_refs(model);
  AdamState<float> adam = init_adam(refs);
  load_checkpoint(checkpoint, refs, &adam);
  const double loss = evaluate(model, data.test, cfg.get_int("batch", 8));
  std::ofstream out(args.run_dir + "/eval.csv", std::ios::trunc);
  out.precision(17);
  out << "checkpoint,sce_sum,sce_per_pixel\n"
      << checkpoint << "," << loss << ","
      << loss / double(prediction_elements(pc)) << "\n";
  std::cout << "test sce_sum=" << loss << " per_pixel="
            << loss / double(prediction_elements(pc)) << "\n";
  return 0;
}

int cmd_gradcheck(const CommonArgs& args, bool tiny) {
  ConfigMap cfg = resolve_config(args);
  write_resolved(cfg, args.run_dir);
  Rng rng(cfg.get_u64("seed", 7));
  double worst = 0;
  std::string worst_name;
  auto run = [&](const std::string& name,
                 std::vector<std::pair<std::string, Tensor<double>>> params,
                 const GradCheckBuild& build) {
    GradCheckReport r = gradient_check(std::move(params), build, 1e-4, 1e-5);
    std::cout << "  " << name << ": max_rel_err=" << r.max_rel_err << " "
              << (r.passed ? "PASS" : "FAIL") << "\n";
    if (r.max_rel_err > worst) {
      worst = r.max_rel_err;
      worst_name = name;
    }
  };

  auto rand_t = [&](Shape s, double lo = -1, double hi = 1) {
    Tensor<double> t(s);
    fill_uniform(t, rng, lo, hi);
    return t;
  };
  run("conv2d+sigmoid+sum",
      {{"x", rand_t({1, 4, 4, 2})},
       {"k", rand_t({3, 3, 2, 3})},
       {"b", rand_t({1, 1, 1, 3})}},
      [](Tape<double>& t, const std::vector<Var<double>>& p) {
        return sum_all(sigmoid(conv2d(p[0], p[1], p[2])));
      });
  if (!tiny) {
    MultiKernelSpec spec;
    spec.branches = {Branch{1, 2}, Branch{3, 2}};
    CellParams<double> cell =
        make_cell<double>(spec, 2, Peephole::per_channel, 7);
    std::vector<Tensor<double>> frames;
    for (int t = 0; t < 3; ++t) frames.push_back(rand_t({1, 3, 3, 2}));
    std::vector<std::pair<std::string, Tensor<double>>> params;
    for (auto& [name, tensor] : cell_param_refs(cell, "cell"))
      params.emplace_back(name, *tensor);
    run("multikernel-3step", params,
        [&](Tape<double>& tape, const std::vector<Var<double>>& leaves) {
          CellParams<double> local = cell;
          CellVars<double> vars;
          vars.params = &local;
          std::size_t li = 0;
          for (int b = 0; b < 2; ++b) {
            BranchVars<double> bv;
            bv.w_x = leaves[li++];
            bv.w_h = leaves[li++];
            vars.branches.push_back(bv);
          }
          vars.bias = leaves[li++];
          vars.w_ci = leaves[li++];
          vars.w_cf = leaves[li++];
          vars.w_co = leaves[li++];
          StateVars<double> st = zero_state(tape, 1, 3, 3, 4);
          for (const auto& x : frames)
            st = multikernel_step(tape, vars, tape.leaf(x), st);
          return sum_all(hadamard(st.h, st.h));
        });
  }
  const bool pass = worst <= 1e-4;
  std::cout << "max relative error " << worst << " (" << worst_name << "): "
            << (pass ? "PASS" : "FAIL") << " at 1e-4\n";
  return pass ? 0 : 1;
}

int cmd_params(const CommonArgs& args, bool full) {
  ConfigMap cfg = resolve_config(args);
  write_resolved(cfg, args.run_dir);
  MultiKernelSpec spec = spec_from(cfg);
  const int c_in = cfg.get_int("c_in", 512);
  const ParamCount count = count_parameters(spec, c_in);
  std::cout << "weights=" << count.weights << " biases=" << count.biases << "\n";
  if (full) {
    const ParamCount fc = count_parameters_full(
        spec, c_in, peephole_from(cfg), cfg.get_int("state_h", 0),
        cfg.get_int("state_w", 0));
    std::cout << "full_weights=" << fc.weights << " full_biases=" << fc.biases
              << "\n";
  }
  return 0;
}

int cmd_sweep(const CommonArgs& args) {
  ConfigMap cfg = resolve_config(args);
  write_resolved(cfg, args.run_dir);
  SweepConfig sc;
  sc.speeds = cfg.get_doubles("sweep_speeds", {1, 6});
  std::istringstream items(cfg.get_str("sweep_configs", "3:32,7:32"));
  std::string item;
  while (std::getline(items, item, ','))
    sc.configs.push_back({item, parse_spec_item(item)});
  sc.train_size = cfg.get_int("train_size", 500);
  sc.test_size = cfg.get_int("test_size", 100);
  sc.epochs = cfg.get_int("epochs", 20);
  sc.batch = cfg.get_int("batch", 8);
  sc.replicates = cfg.get_int("replicates", 3);
  sc.lr = cfg.get_double("lr", 1e-3);
  sc.clip_norm = cfg.get_double("clip_norm", 10.0);
  sc.base_seed = cfg.get_u64("seed", 1);
  sc.gen = generator_from(cfg);
  sc.t_in = cfg.get_int("t_in", 10);
  sc.t_out = cfg.get_int("t_out", 10);
  sc.peephole = peephole_from(cfg);
  sc.out_dir = args.run_dir;
  sc.reuse_completed = cfg.get_bool("reuse_completed", true);
  SweepResult result = run_speed_sweep(sc, digits_from(cfg));
  int failures = 0;
  for (const auto& cell : result.cells)
    if (!cell.ok) ++failures;
  std::cout << "sweep: " << result.cells.size() << " cells, " << failures
            << " failed; results in " << result.csv_path << "\n";
  for (const auto& [speed, rep, delta] : result.deltas)
    std::cout << "delta(speed=" << speed << ", seed=" << rep << ") = " << delta
              << "\n";
  return 0;
}

int cmd_histogram(const CommonArgs& args, const std::string& dataset_path) {
  ConfigMap cfg = resolve_config(args);
  write_resolved(cfg, args.run_dir);
  std::vector<Tensor<float>> flows;
  if (!dataset_path.empty()) {
    for (const SequenceSample& s : read_dataset(dataset_path))
      flows.push_back(s.flow);
  } else {
    GeneratorConfig gen = generator_from(cfg);
    IdxImages digits = digits_from(cfg);
    const int count = cfg.get_int("count", 50);
    for (int i = 0; i < count; ++i) {
      GeneratorConfig c = gen;
      c.seed = Rng::derive(gen.seed, std::uint64_t(i));
      flows.push_back(generate_sequence(c, digits).flow);
    }
  }
  VelocityHistogram hist = velocity_histogram(
      flows, cfg.get_int("bins", 40), cfg.get_double("clip", 20.0));
  const std::string out = args.run_dir + "/histogram.csv";
  std::ofstream os(out, std::ios::trunc);
  os.precision(17);
  os << "bin_lo,bin_hi,mean_normalized_count\n";
  for (std::size_t b = 0; b + 1 < hist.edges.size(); ++b)
    os << hist.edges[b] << "," << hist.edges[b + 1] << "," << hist.mean[b]
       << "\n";
  std::cout << "histogram over " << flows.size() << " videos written to " << out
            << "\n";
  return 0;
}

int cmd_gates(const CommonArgs& args, const std::string& checkpoint) {
  ConfigMap cfg = resolve_config(args);
  write_resolved(cfg, args.run_dir);
  GeneratorConfig gen = generator_from(cfg);
  IdxImages digits = digits_from(cfg);
  PredictorConfig pc = predictor_from(cfg, gen);
  PredictorParams<float> model = make_predictor<float>(pc, cfg.get_u64("model_seed", 1));
  if (!checkpoint.empty()) {
    auto refs = predictor_param_refs(model);
    AdamState<float> adam = init_adam(refs);
    load_checkpoint(checkpoint, refs, &adam);
  }
  ExperimentData data = build_datasets(gen, 0, cfg.get_int("batch", 8),
                                       cfg.get_u64("data_seed", 11), digits,
                                       pc.attention());
  std::vector<int> idx;
  for (std::size_t i = 0; i < data.test.size(); ++i) idx.push_back(int(i));
  SeqBatch<float> batch =
      make_batch(data.test, idx, pc.t_in, pc.t_out, pc.attention());
  std::vector<Tensor<float>> maps;
  auto rows = gate_statistics(model, batch, &maps);
  const std::string out = args.run_dir + "/gates.csv";
  std::ofstream os(out, std::ios::trunc);
  os.precision(17);
  os << "timestep,gate,mean,std,saturation\n";
  for (const auto& row : rows)
    os << row.timestep << "," << row.gate << "," << row.mean << ","
       << row.stddev << "," << row.saturation << "\n";
  // feature-map dumps: first batch element, channels tiled horizontally
  io::make_dirs(args.run_dir + "/maps");
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const Tensor<float>& m = maps[i];
    const bool is_tanh = rows[i].gate == "cell";
    const int h = m.shape.h, w = m.shape.w, c = m.shape.c;
    std::vector<float> tile(std::size_t(h) * w * c);
    for (int y = 0; y < h; ++y)
      for (int ch = 0; ch < c; ++ch)
        for (int x = 0; x < w; ++x) {
          float v = m.at(0, y, x, ch);
          if (is_tanh) v = 0.5f * (v + 1.0f);
          tile[std::size_t(y) * (w * c) + std::size_t(ch) * w + x] = v;
        }
    std::ostringstream name;
    name << args.run_dir << "/maps/t" << rows[i].timestep << "_" << rows[i].gate
         << ".pgm";
    io::write_pgm(name.str(), tile.data(), h, w * c);
  }
  std::cout << rows.size() << " gate-stat rows written to " << out << "\n";
  return 0;
}

int cmd_masks(const CommonArgs& args) {
  ConfigMap cfg = resolve_config(args);
  write_resolved(cfg, args.run_dir);
  MaskExperimentConfig mc;
  mc.gen = generator_from(cfg);
  if (!cfg.has("num_digits")) {
    mc.gen.num_digits = 2;
    mc.gen.speeds = {1.0, 8.0};
  }
  MultiKernelSpec spec = spec_from(cfg);
  if (!cfg.has("kernels")) {
    spec = MultiKernelSpec();
    spec.branches = {Branch{5, 16, 0, true}, Branch{7, 16, 0, true}};
  }
  mc.spec = spec;
  mc.train_size = cfg.get_int("train_size", 300);
  mc.test_size = cfg.get_int("test_size", 60);
  mc.epochs = cfg.get_int("epochs", 48);
  mc.batch = cfg.get_int("batch", 8);
  mc.lr = cfg.get_double("lr", 1e-3);
  mc.clip_norm = cfg.get_double("clip_norm", 10.0);
  mc.replicates = cfg.get_int("replicates", 3);
  mc.base_seed = cfg.get_u64("seed", 7);
  mc.t_in = cfg.get_int("t_in", 10);
  mc.t_out = cfg.get_int("t_out", 10);
  mc.peephole = peephole_from(cfg);
  mc.out_dir = args.run_dir;
  mc.reuse_completed = cfg.get_bool("reuse_completed", true);
  MaskExperimentResult result = run_mask_experiment(mc, digits_from(cfg));
  std::cout << "mask specialization: both orderings in " << result.pass_count
            << "/" << mc.replicates << " seeds; report in " << result.csv_path
            << "\n";
  for (const MaskSeedResult& s : result.seeds) {
    std::cout << "  seed " << s.replicate << ": ";
    if (!s.ok) {
      std::cout << "failed: " << s.error << "\n";
      continue;
    }
    for (std::size_t br = 0; br < s.region_means.size(); ++br) {
      std::cout << "branch" << br << " [bg=" << s.region_means[br][0]
                << " slow=" << s.region_means[br][1]
                << " fast=" << s.region_means[br][2] << "] ";
    }
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  CLI::App app{"multi-kernel convolutional LSTM toolkit"};
  app.require_subcommand(0, 1);

  CommonArgs gen_args, train_args, eval_args, grad_args, params_args,
      sweep_args, hist_args, gates_args, masks_args;
  std::string eval_ckpt, gates_ckpt, hist_dataset;
  bool grad_tiny = false, params_full = false;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a sequence dataset");
  add_common(gen, gen_args, "runs/gen-data");
  CLI::App* train = app.add_subcommand("train", "train a future predictor");
  add_common(train, train_args, "runs/train");
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, eval_args, "runs/eval");
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference check");
  add_common(grad, grad_args, "runs/gradcheck");
  grad->add_flag("--tiny", grad_tiny, "run the quick subset only");
  CLI::App* params = app.add_subcommand("params", "parameter counting");
  add_common(params, params_args, "runs/params");
  params->add_flag("--full", params_full, "also print the full count");
  CLI::App* sweep = app.add_subcommand("sweep", "kernel-size/speed sweep");
  add_common(sweep, sweep_args, "runs/sweep");
  CLI::App* hist = app.add_subcommand("histogram", "squared-velocity histogram");
  add_common(hist, hist_args, "runs/histogram");
  hist->add_option("--dataset", hist_dataset, "existing dataset file");
  CLI::App* gates = app.add_subcommand("gates", "gate saturation statistics");
  add_common(gates, gates_args, "runs/gates");
  gates->add_option("--checkpoint", gates_ckpt, "checkpoint file");
  CLI::App* masks = app.add_subcommand("masks", "mask specialization report");
  add_common(masks, masks_args, "runs/masks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() != 0) {
      std::cerr << app.help() << "\n";
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
    return app.exit(e);  // --help
  }

  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_args);
    if (train->parsed()) return cmd_train(train_args);
    if (eval->parsed()) return cmd_eval(eval_args, eval_ckpt);
    if (grad->parsed()) return cmd_gradcheck(grad_args, grad_tiny);
    if (params->parsed()) return cmd_params(params_args, params_full);
    if (sweep->parsed()) return cmd_sweep(sweep_args);
    if (hist->parsed()) return cmd_histogram(hist_args, hist_dataset);
    if (gates->parsed()) return cmd_gates(gates_args, gates_ckpt);
    if (masks->parsed()) return cmd_masks(masks_args);
  } catch (const std::exception& e) {
    std::cerr << "mklstm: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
