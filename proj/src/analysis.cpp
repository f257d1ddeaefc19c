#include "mklstm/analysis.hpp"

#include <filesystem>
#include <functional>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mklstm/config.hpp"
#include "mklstm/io.hpp"

namespace mklstm {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

std::string cell_dir_name(const std::string& label, double speed, int rep) {
  std::ostringstream os;
  os << label << "-s" << speed << "-r" << rep;
  return os.str();
}

}  // namespace

VelocityHistogram velocity_histogram(const std::vector<Tensor<float>>& flows,
                                     int bins, double clip) {
  require(bins >= 1, "velocity_histogram: bins must be >= 1");
  VelocityHistogram hist;
  const double vmax = 2.0 * clip * clip;
  hist.edges.resize(std::size_t(bins) + 1);
  for (int i = 0; i <= bins; ++i)
    hist.edges[std::size_t(i)] = vmax * double(i) / double(bins);
  hist.mean.assign(std::size_t(bins), 0.0);
  for (const Tensor<float>& flow : flows) {
    require(flow.shape.c == 2,
            "velocity_histogram: flow tensors need 2 channels, got " +
                flow.shape.str());
    std::vector<double> counts(std::size_t(bins), 0.0);
    const std::int64_t pixels = flow.size() / 2;
    for (std::int64_t i = 0; i < pixels; ++i) {
      const double x =
          std::clamp(double(flow.data[2 * i]), -clip, clip);
      const double y =
          std::clamp(double(flow.data[2 * i + 1]), -clip, clip);
      const double v = x * x + y * y;
      int bin = int(v / vmax * bins);
      if (bin >= bins) bin = bins - 1;  // v == vmax lands in the last bin
      counts[std::size_t(bin)] += 1.0;
    }
    for (double& c : counts) c /= double(pixels);
    hist.per_video.push_back(counts);
  }
  if (!hist.per_video.empty()) {
    for (const auto& counts : hist.per_video)
      for (int i = 0; i < bins; ++i) hist.mean[std::size_t(i)] += counts[std::size_t(i)];
    for (double& m : hist.mean) m /= double(hist.per_video.size());
  }
  return hist;
}

template <typename T>
std::vector<GateStatsRow> gate_statistics(PredictorParams<T>& model,
                                          const SeqBatch<T>& batch,
                                          std::vector<Tensor<T>>* feature_maps) {
  Tape<T> tape;
  PredictorVars<T> vars = bind_predictor(tape, model, false);
  GateTrace<T> trace;
  ForwardTrace<T> ftrace;
  ftrace.encoder_gates = &trace;
  encode(tape, vars, model.config, batch.inputs, batch.flows, &ftrace);

  std::vector<GateStatsRow> rows;
  const char* names[4] = {"input", "forget", "output", "cell"};
  for (std::size_t t = 0; t < trace.input_gate.size(); ++t) {
    const Var<T>* gates[4] = {&trace.input_gate[t], &trace.forget_gate[t],
                              &trace.output_gate[t], &trace.cell_act[t]};
    for (int g = 0; g < 4; ++g) {
      const Tensor<T>& v = gates[g]->value();
      double sum = 0, sq = 0, sat = 0;
      for (const T& x : v.data) {
        sum += double(x);
        sq += double(x) * double(x);
        if (g < 3) {
          if (double(x) < kSigmoidSatLo || double(x) > kSigmoidSatHi) sat += 1;
        } else {
          if (std::abs(double(x)) > kTanhSat) sat += 1;
        }
      }
      const double n = double(v.size());
      GateStatsRow row;
      row.timestep = int(t);
      row.gate = names[g];
      row.mean = sum / n;
      row.stddev = std::sqrt(std::max(0.0, sq / n - row.mean * row.mean));
      row.saturation = sat / n;
      rows.push_back(row);
      if (feature_maps != nullptr) feature_maps->push_back(v);
    }
  }
  return rows;
}

ExperimentData build_datasets(const GeneratorConfig& base, int train_size,
                              int test_size, std::uint64_t data_seed,
                              const IdxImages& digits, bool with_flow) {
  ExperimentData data;
  const int p = base.patch;
  auto add = [&](SeqDataset<float>& ds, std::uint64_t seq_seed, bool keep_raw) {
    GeneratorConfig cfg = base;
    cfg.seed = seq_seed;
    SequenceSample sample = generate_sequence(cfg, digits);
    ds.frames.push_back(patchify(sample.frames, p));
    if (with_flow) ds.flows.push_back(patchify(sample.flow, p));
    if (keep_raw) data.test_raw.push_back(std::move(sample));
  };
  for (int i = 0; i < train_size; ++i)
    add(data.train, Rng::derive(data_seed, std::uint64_t(i)), false);
  for (int i = 0; i < test_size; ++i)
    add(data.test, Rng::derive(data_seed, 0x74657374ULL + std::uint64_t(i)), true);
  return data;
}

namespace {

struct CellOutcome {
  double final_test_sce = 0;
  bool ok = false;
  std::string error;
};

// A config whose only difference is the epoch budget may be resumed from the
// existing checkpoint: resumption is bitwise-equivalent to an uninterrupted
// run, so extending epochs continues the same trajectory.
std::string strip_epochs(const std::string& cfg_text) {
  ConfigMap cfg = ConfigMap::from_text(cfg_text);
  cfg.set("epochs", "");
  return cfg.resolved_text();
}

// Runs one training cell (or reuses its completed results). The done-marker
// records the resolved config; a mismatch forces a retrain.
CellOutcome run_cell(const std::string& cell_dir, const std::string& cfg_text,
                     bool reuse, const std::function<double()>& train_fn) {
  io::make_dirs(cell_dir);
  const std::string done_path = cell_dir + "/done";
  const std::string resolved_path = cell_dir + "/config.resolved";
  CellOutcome outcome;
  const bool config_matches = io::file_exists(resolved_path) &&
                              io::read_text_file(resolved_path) == cfg_text;
  const bool resumable =
      config_matches ||
      (io::file_exists(resolved_path) &&
       strip_epochs(io::read_text_file(resolved_path)) == strip_epochs(cfg_text));
  if (reuse && config_matches && io::file_exists(done_path)) {
    const ConfigMap done = ConfigMap::from_text(io::read_text_file(done_path));
    if (done.get_str("status", "") == "ok") {
      outcome.final_test_sce = done.get_double("final_test_sce", 0.0);
      outcome.ok = true;
      return outcome;
    }
  }
  if (!resumable) {
    // stale state from a different configuration must not be resumed
    std::filesystem::remove_all(cell_dir);
    io::make_dirs(cell_dir);
  }
  io::write_text_file(resolved_path, cfg_text);
  try {
    outcome.final_test_sce = train_fn();
    outcome.ok = true;
    std::ostringstream os;
    os.precision(17);
    os << "status=ok\nfinal_test_sce=" << outcome.final_test_sce << "\n";
    io::write_text_file(done_path, os.str());
  } catch (const std::exception& e) {
    outcome.error = e.what();
    io::write_text_file(done_path,
                        std::string("status=failed\nerror=") + e.what() + "\n");
  }
  return outcome;
}

PredictorConfig experiment_model_config(const GeneratorConfig& gen,
                                        const MultiKernelSpec& spec, int t_in,
                                        int t_out, Peephole peephole,
                                        bool with_flow) {
  PredictorConfig pc;
  pc.t_in = t_in;
  pc.t_out = t_out;
  pc.height = gen.canvas / gen.patch;
  pc.width = gen.canvas / gen.patch;
  pc.in_channels = gen.patch * gen.patch;  // single-channel frames, patchified
  pc.spec = spec;
  pc.peephole = peephole;
  if (with_flow) pc.flow_channels = 2 * gen.patch * gen.patch;
  return pc;
}

std::string join_ints(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ",";
    os << v[i];
  }
  return os.str();
}

std::string experiment_cfg_text(const GeneratorConfig& gen,
                                const MultiKernelSpec& spec,
                                const std::string& label, double speed, int rep,
                                int train_size, int test_size, int epochs,
                                int batch, double lr, double clip,
                                std::uint64_t data_seed, std::uint64_t fit_seed,
                                int t_in, int t_out, Peephole peephole) {
  ConfigMap cfg = ConfigMap::from_text(gen.to_text());
  cfg.set("config", label);
  {
    std::vector<int> kernels, channels, bottlenecks, attended;
    for (const Branch& b : spec.branches) {
      kernels.push_back(b.kernel);
      channels.push_back(b.channels);
      bottlenecks.push_back(b.bottleneck);
      attended.push_back(b.attended ? 1 : 0);
    }
    cfg.set("kernels", join_ints(kernels));
    cfg.set("channels", join_ints(channels));
    cfg.set("bottlenecks", join_ints(bottlenecks));
    cfg.set("attended", join_ints(attended));
    cfg.set("fusion", spec.fusion == Fusion::one_by_one ? "one_by_one"
                                                        : "interleave");
    if (spec.fusion == Fusion::one_by_one) {
      cfg.set("out_channels", std::to_string(spec.out_channels));
      cfg.set("fusion_tanh", spec.fusion_tanh ? "1" : "0");
    }
  }
  cfg.set("replicate", std::to_string(rep));
  cfg.set("train_size", std::to_string(train_size));
  cfg.set("test_size", std::to_string(test_size));
  cfg.set("epochs", std::to_string(epochs));
  cfg.set("batch", std::to_string(batch));
  cfg.set("lr", std::to_string(lr));
  cfg.set("clip_norm", std::to_string(clip));
  cfg.set("data_seed", std::to_string(data_seed));
  cfg.set("fit_seed", std::to_string(fit_seed));
  cfg.set("t_in", std::to_string(t_in));
  cfg.set("t_out", std::to_string(t_out));
  cfg.set("precision", "f32");
  cfg.set("decoder_input", "zeros");
  cfg.set("peephole", peephole == Peephole::none
                          ? "none"
                          : (peephole == Peephole::per_channel ? "per_channel"
                                                               : "full_state"));
  cfg.set("speed", std::to_string(speed));
  (void)speed;
  return cfg.resolved_text();
}

}  // namespace

const SweepCellResult* SweepResult::find(double speed, const std::string& label,
                                         int replicate) const {
  for (const SweepCellResult& c : cells)
    if (c.speed == speed && c.label == label && c.replicate == replicate)
      return &c;
  return nullptr;
}

SweepResult run_speed_sweep(const SweepConfig& config, const IdxImages& digits) {
  require(config.configs.size() >= 1, "sweep: need at least one kernel config");
  require(!config.speeds.empty(), "sweep: need at least one speed");
  io::make_dirs(config.out_dir);

  SweepResult result;
  for (std::size_t si = 0; si < config.speeds.size(); ++si) {
    const double speed = config.speeds[si];
    GeneratorConfig gen = config.gen;
    gen.num_digits = 1;
    gen.speeds = {speed};
    for (int rep = 0; rep < config.replicates; ++rep) {
      // dataset depends on (speed, replicate) only, so kernel configs are
      // compared on identical data
      const std::uint64_t data_seed =
          Rng::derive(config.base_seed, 11000 + si * 100 + std::uint64_t(rep));
      ExperimentData data;  // built lazily, shared across configs
      bool data_ready = false;
      for (std::size_t ci = 0; ci < config.configs.size(); ++ci) {
        const SweepCellSpec& cspec = config.configs[ci];
        const std::uint64_t fit_seed = Rng::derive(
            config.base_seed,
            22000 + ci * 10000 + si * 100 + std::uint64_t(rep));
        const std::string cell_dir =
            config.out_dir + "/" + cell_dir_name(cspec.label, speed, rep);
        const std::string cfg_text = experiment_cfg_text(
            gen, cspec.spec, cspec.label, speed, rep, config.train_size,
            config.test_size, config.epochs, config.batch, config.lr,
            config.clip_norm, data_seed, fit_seed, config.t_in, config.t_out,
            config.peephole);
        CellOutcome outcome = run_cell(
            cell_dir, cfg_text, config.reuse_completed, [&]() -> double {
              if (!data_ready) {
                data = build_datasets(gen, config.train_size, config.test_size,
                                      data_seed, digits, false);
                data_ready = true;
              }
              PredictorConfig pc = experiment_model_config(
                  gen, cspec.spec, config.t_in, config.t_out, config.peephole,
                  false);
              PredictorParams<float> model =
                  make_predictor<float>(pc, fit_seed);
              FitConfig fc;
              fc.epochs = config.epochs;
              fc.batch = config.batch;
              fc.adam.lr = config.lr;
              fc.clip_norm = config.clip_norm;
              fc.seed = fit_seed;
              fc.run_dir = cell_dir;
              fc.run_id = cell_dir_name(cspec.label, speed, rep);
              fc.resume = true;  // continue an interrupted cell
              fc.keep_epoch_checkpoints = false;
              fc.config_text = cfg_text;
              return fit(model, data.train, data.test, fc).final_test_sce;
            });
        SweepCellResult row;
        row.speed = speed;
        row.label = cspec.label;
        row.replicate = rep;
        row.final_test_sce = outcome.final_test_sce;
        row.ok = outcome.ok;
        row.error = outcome.error;
        result.cells.push_back(row);
      }
    }
  }

  result.csv_path = config.out_dir + "/sweep.csv";
  {
    std::ofstream csv(result.csv_path, std::ios::trunc);
    csv.precision(17);
    csv << "speed,kernel_config,seed,final_test_sce,status\n";
    for (const SweepCellResult& c : result.cells)
      csv << c.speed << "," << c.label << "," << c.replicate << ","
          << c.final_test_sce << "," << (c.ok ? "ok" : "failed") << "\n";
  }

  if (config.configs.size() >= 2) {
    result.delta_csv_path = config.out_dir + "/delta.csv";
    std::ofstream csv(result.delta_csv_path, std::ios::trunc);
    csv.precision(17);
    csv << "speed,seed,delta\n";  // loss(configs[0]) - loss(configs[1])
    for (double speed : config.speeds)
      for (int rep = 0; rep < config.replicates; ++rep) {
        const SweepCellResult* a =
            result.find(speed, config.configs[0].label, rep);
        const SweepCellResult* b =
            result.find(speed, config.configs[1].label, rep);
        if (a == nullptr || b == nullptr || !a->ok || !b->ok) continue;
        const double delta = a->final_test_sce - b->final_test_sce;
        result.deltas.emplace_back(speed, rep, delta);
        csv << speed << "," << rep << "," << delta << "\n";
      }
  }
  return result;
}

void accumulate_mask_regions(PredictorParams<float>& model,
                             const SeqDataset<float>& test,
                             const std::vector<SequenceSample>& test_raw,
                             int batch, int patch,
                             std::vector<std::vector<double>>& sums,
                             std::vector<std::vector<std::int64_t>>& counts) {
  const PredictorConfig& cfg = model.config;
  const int num_regions = int(sums.empty() ? 0 : sums[0].size());
  require(test.size() == test_raw.size(),
          "mask regions: dataset / raw sample count mismatch");
  for (std::size_t start = 0; start < test.size(); start += std::size_t(batch)) {
    std::vector<int> idx;
    for (std::size_t i = start;
         i < std::min(start + std::size_t(batch), test.size()); ++i)
      idx.push_back(int(i));
    SeqBatch<float> b = make_batch(test, idx, cfg.t_in, cfg.t_out, true);
    Tape<float> tape;
    PredictorVars<float> vars = bind_predictor(tape, model, false);
    std::vector<std::vector<Var<float>>> mask_trace;
    ForwardTrace<float> ftrace;
    ftrace.encoder_masks = &mask_trace;
    encode(tape, vars, cfg, b.inputs, b.flows, &ftrace);

    const int canvas = test_raw[0].frames.shape.h;
    for (std::size_t t = 0; t < mask_trace.size(); ++t) {
      // region labels for frame t across the batch
      std::vector<std::uint8_t> labels(idx.size() * std::size_t(canvas) * canvas);
      for (std::size_t bi = 0; bi < idx.size(); ++bi) {
        const SequenceSample& raw = test_raw[std::size_t(idx[bi])];
        std::copy_n(&raw.regions[std::size_t(t) * canvas * canvas],
                    std::size_t(canvas) * canvas,
                    &labels[bi * std::size_t(canvas) * canvas]);
      }
      std::vector<Tensor<float>> masks;
      for (const Var<float>& m : mask_trace[t]) masks.push_back(m.value());
      std::vector<std::vector<std::int64_t>> frame_counts;
      std::vector<std::vector<double>> means = mask_region_statistics(
          masks, labels, canvas, canvas, patch, num_regions, &frame_counts);
      for (std::size_t br = 0; br < masks.size(); ++br)
        for (int r = 0; r < num_regions; ++r) {
          sums[br][std::size_t(r)] +=
              means[br][std::size_t(r)] * double(frame_counts[br][std::size_t(r)]);
          counts[br][std::size_t(r)] += frame_counts[br][std::size_t(r)];
        }
    }
  }
}

namespace {

// Visual mask report for one test sequence: per attended branch, the mask of
// the last input frame unpatchified back onto the canvas, next to the frame.
void dump_masks_pgm(PredictorParams<float>& model, const SeqDataset<float>& test,
                    const std::vector<SequenceSample>& test_raw,
                    const std::string& dir, int patch) {
  if (test.size() == 0) return;
  io::make_dirs(dir);
  const PredictorConfig& cfg = model.config;
  SeqBatch<float> b = make_batch(test, {0}, cfg.t_in, cfg.t_out, true);
  Tape<float> tape;
  PredictorVars<float> vars = bind_predictor(tape, model, false);
  std::vector<std::vector<Var<float>>> mask_trace;
  ForwardTrace<float> ftrace;
  ftrace.encoder_masks = &mask_trace;
  encode(tape, vars, cfg, b.inputs, b.flows, &ftrace);
  if (mask_trace.empty()) return;
  const auto& masks = mask_trace.back();
  for (std::size_t br = 0; br < masks.size(); ++br) {
    Tensor<float> canvas = unpatchify(masks[br].value(), patch);
    io::write_pgm(dir + "/branch" + std::to_string(br) + "_mask.pgm",
                  canvas.data.data(), canvas.shape.h, canvas.shape.w);
  }
  const Tensor<float>& frame = test_raw[0].frames;
  const int t_last = cfg.t_in - 1;
  io::write_pgm(dir + "/input_frame.pgm",
                &frame.data[frame.index(t_last, 0, 0, 0)], frame.shape.h,
                frame.shape.w);
}

}  // namespace

MaskExperimentResult run_mask_experiment(const MaskExperimentConfig& config,
                                         const IdxImages& digits) {
  require(config.spec.attended_count() >= 2,
          "mask experiment: needs at least two attended branches");
  require(config.gen.num_digits == 2,
          "mask experiment: needs the two-digit generator");
  io::make_dirs(config.out_dir);

  // branch indices of the smaller / larger attended kernels
  int small_branch = -1, large_branch = -1;
  {
    int mi = 0;
    int k_small = 1 << 20, k_large = 0;
    for (const Branch& b : config.spec.branches) {
      if (!b.attended) continue;
      if (b.kernel < k_small) { k_small = b.kernel; small_branch = mi; }
      if (b.kernel > k_large) { k_large = b.kernel; large_branch = mi; }
      ++mi;
    }
    require(small_branch != large_branch,
            "mask experiment: attended kernels must differ in size");
  }
  const bool digit0_slow = config.gen.speeds[0] <= config.gen.speeds[1];
  const int slow_region = digit0_slow ? 1 : 2;
  const int fast_region = digit0_slow ? 2 : 1;

  MaskExperimentResult result;
  for (int rep = 0; rep < config.replicates; ++rep) {
    const std::uint64_t data_seed =
        Rng::derive(config.base_seed, 31000 + std::uint64_t(rep));
    const std::uint64_t fit_seed =
        Rng::derive(config.base_seed, 32000 + std::uint64_t(rep));
    const std::string cell_dir =
        config.out_dir + "/" + cell_dir_name("attn", 0, rep);
    const std::string cfg_text = experiment_cfg_text(
        config.gen, config.spec, "attn-5x5+7x7", 0, rep, config.train_size,
        config.test_size, config.epochs, config.batch, config.lr,
        config.clip_norm, data_seed, fit_seed, config.t_in, config.t_out,
        config.peephole);

    MaskSeedResult seed_result;
    seed_result.replicate = rep;
    const std::string stats_path = cell_dir + "/mask_regions.csv";
    const bool have_stats =
        config.reuse_completed && io::file_exists(stats_path) &&
        io::file_exists(cell_dir + "/config.resolved") &&
        io::read_text_file(cell_dir + "/config.resolved") == cfg_text &&
        io::file_exists(cell_dir + "/done");

    try {
      std::vector<std::vector<double>> means;
      if (have_stats) {
        // reuse the recorded region means
        std::ifstream in(stats_path);
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
          std::istringstream ls(line);
          std::string field;
          std::vector<std::string> fields;
          while (std::getline(ls, field, ',')) fields.push_back(field);
          if (fields.size() != 3) continue;
          const std::size_t br = std::size_t(std::stoi(fields[0]));
          const std::size_t rg = std::size_t(std::stoi(fields[1]));
          if (means.size() <= br) means.resize(br + 1);
          if (means[br].size() <= rg) means[br].resize(rg + 1, 0.0);
          means[br][rg] = std::stod(fields[2]);
        }
        const ConfigMap done = ConfigMap::from_text(
            io::read_text_file(cell_dir + "/done"));
        seed_result.final_test_sce = done.get_double("final_test_sce", 0.0);
      } else {
        ExperimentData data =
            build_datasets(config.gen, config.train_size, config.test_size,
                           data_seed, digits, true);
        PredictorConfig pc = experiment_model_config(
            config.gen, config.spec, config.t_in, config.t_out, config.peephole,
            true);
        PredictorParams<float> model = make_predictor<float>(pc, fit_seed);
        CellOutcome outcome = run_cell(
            cell_dir, cfg_text, config.reuse_completed, [&]() -> double {
              FitConfig fc;
              fc.epochs = config.epochs;
              fc.batch = config.batch;
              fc.adam.lr = config.lr;
              fc.clip_norm = config.clip_norm;
              fc.seed = fit_seed;
              fc.run_dir = cell_dir;
              fc.run_id = cell_dir_name("attn", 0, rep);
              fc.resume = true;
              fc.keep_epoch_checkpoints = false;
              fc.config_text = cfg_text;
              return fit(model, data.train, data.test, fc).final_test_sce;
            });
        if (!outcome.ok) throw std::runtime_error(outcome.error);
        seed_result.final_test_sce = outcome.final_test_sce;
        // restore the trained weights (run_cell may have reused a finished
        // fit whose parameters live in the checkpoint)
        AdamState<float> adam = init_adam(predictor_param_refs(model));
        load_checkpoint(cell_dir + "/ckpt_latest.mkck",
                        predictor_param_refs(model), &adam);

        const int num_regions = config.gen.num_digits + 1;
        std::vector<std::vector<double>> sums(
            config.spec.attended_count(),
            std::vector<double>(std::size_t(num_regions), 0.0));
        std::vector<std::vector<std::int64_t>> counts(
            config.spec.attended_count(),
            std::vector<std::int64_t>(std::size_t(num_regions), 0));
        accumulate_mask_regions(model, data.test, data.test_raw, config.batch,
                                config.gen.patch, sums, counts);
        dump_masks_pgm(model, data.test, data.test_raw, cell_dir + "/masks",
                       config.gen.patch);
        means.assign(sums.size(), {});
        std::ofstream csv(stats_path, std::ios::trunc);
        csv.precision(17);
        csv << "branch,region,mean_activation\n";
        for (std::size_t br = 0; br < sums.size(); ++br) {
          means[br].resize(std::size_t(num_regions), 0.0);
          for (int r = 0; r < num_regions; ++r) {
            means[br][std::size_t(r)] =
                counts[br][std::size_t(r)] > 0
                    ? sums[br][std::size_t(r)] / double(counts[br][std::size_t(r)])
                    : 0.0;
            csv << br << "," << r << "," << means[br][std::size_t(r)] << "\n";
          }
        }
      }
      seed_result.region_means = means;
      seed_result.fast_prefers_large =
          means[std::size_t(large_branch)][std::size_t(fast_region)] >
          means[std::size_t(small_branch)][std::size_t(fast_region)];
      seed_result.slow_prefers_small =
          means[std::size_t(small_branch)][std::size_t(slow_region)] >
          means[std::size_t(large_branch)][std::size_t(slow_region)];
      seed_result.ok = true;
    } catch (const std::exception& e) {
      seed_result.error = e.what();
    }
    if (seed_result.ok && seed_result.fast_prefers_large &&
        seed_result.slow_prefers_small)
      result.pass_count += 1;
    result.seeds.push_back(std::move(seed_result));
  }

  result.csv_path = config.out_dir + "/mask_experiment.csv";
  std::ofstream csv(result.csv_path, std::ios::trunc);
  csv.precision(17);
  csv << "seed,final_test_sce,fast_prefers_large,slow_prefers_small,status\n";
  for (const MaskSeedResult& s : result.seeds)
    csv << s.replicate << "," << s.final_test_sce << ","
        << s.fast_prefers_large << "," << s.slow_prefers_small << ","
        << (s.ok ? "ok" : ("failed: " + s.error)) << "\n";
  return result;
}

template std::vector<GateStatsRow> gate_statistics<float>(
    PredictorParams<float>&, const SeqBatch<float>&, std::vector<Tensor<float>>*);
template std::vector<GateStatsRow> gate_statistics<double>(
    PredictorParams<double>&, const SeqBatch<double>&, std::vector<Tensor<double>>*);

}  // namespace mklstm
