#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "mklstm/moving_mnist.hpp"
#include "mklstm/predictor.hpp"
#include "mklstm/train.hpp"

namespace mklstm {

// ---- squared-velocity histograms --------------------------------------------

struct VelocityHistogram {
  std::vector<double> edges;                   // bins+1 edges over [0, clip^2*2]
  std::vector<std::vector<double>> per_video;  // each sums to 1
  std::vector<double> mean;                    // mean over videos
};

// v = x^2 + y^2 with components clipped to |.| <= clip (so v <= 2*clip^2).
VelocityHistogram velocity_histogram(const std::vector<Tensor<float>>& flows,
                                     int bins = 40, double clip = 20.0);

// ---- gate saturation statistics ----------------------------------------------

constexpr double kSigmoidSatLo = 0.05;
constexpr double kSigmoidSatHi = 0.95;
constexpr double kTanhSat = 0.95;

struct GateStatsRow {
  int timestep = 0;
  std::string gate;  // input / forget / output / cell
  double mean = 0, stddev = 0, saturation = 0;
};

// Encoder gate activations over one batch; feature_maps (optional) receives
// the raw activation tensors in row order for PGM dumps.
template <typename T>
std::vector<GateStatsRow> gate_statistics(PredictorParams<T>& model,
                                          const SeqBatch<T>& batch,
                                          std::vector<Tensor<T>>* feature_maps = nullptr);

// ---- experiment datasets ------------------------------------------------------

struct ExperimentData {
  SeqDataset<float> train, test;
  std::vector<SequenceSample> test_raw;  // kept for region labels
};

// Per-sample generator seeds derive deterministically from data_seed.
ExperimentData build_datasets(const GeneratorConfig& base, int train_size,
                              int test_size, std::uint64_t data_seed,
                              const IdxImages& digits, bool with_flow);

// ---- kernel-size / speed sweep -------------------------------------------------

struct SweepCellSpec {
  std::string label;
  MultiKernelSpec spec;
};

struct SweepConfig {
  std::vector<double> speeds{1, 6};
  std::vector<SweepCellSpec> configs;  // >= 2 for the trend statistic
  int train_size = 500, test_size = 100;
  int epochs = 20, batch = 8, replicates = 3;
  double lr = 1e-3, clip_norm = 10.0;
  std::uint64_t base_seed = 1;
  GeneratorConfig gen;  // speeds overridden per cell
  int t_in = 10, t_out = 10;
  Peephole peephole = Peephole::per_channel;
  std::string out_dir;
  bool reuse_completed = true;  // skip cells with a matching done-marker
};

struct SweepCellResult {
  double speed = 0;
  std::string label;
  int replicate = 0;
  double final_test_sce = 0;
  bool ok = false;
  std::string error;
};

struct SweepResult {
  std::vector<SweepCellResult> cells;
  // (speed, replicate, loss(configs[0]) - loss(configs[1]))
  std::vector<std::tuple<double, int, double>> deltas;
  std::string csv_path, delta_csv_path;

  const SweepCellResult* find(double speed, const std::string& label,
                              int replicate) const;
};

SweepResult run_speed_sweep(const SweepConfig& config, const IdxImages& digits);

// ---- mask specialization experiment --------------------------------------------

struct MaskExperimentConfig {
  GeneratorConfig gen;   // two digits, e.g. speeds (1, 8)
  MultiKernelSpec spec;  // attended branches, e.g. 5x5 + 7x7
  int train_size = 300, test_size = 60;
  int epochs = 48, batch = 8;
  double lr = 1e-3, clip_norm = 10.0;
  int replicates = 3;
  std::uint64_t base_seed = 7;
  int t_in = 10, t_out = 10;
  Peephole peephole = Peephole::per_channel;
  std::string out_dir;
  bool reuse_completed = true;
};

struct MaskSeedResult {
  int replicate = 0;
  // mean mask activation [branch][region]; regions: 0 bg, 1 slow, 2 fast
  std::vector<std::vector<double>> region_means;
  bool fast_prefers_large = false, slow_prefers_small = false;
  double final_test_sce = 0;
  bool ok = false;
  std::string error;
};

struct MaskExperimentResult {
  std::vector<MaskSeedResult> seeds;
  int pass_count = 0;  // seeds with both orderings
  std::string csv_path;
};

MaskExperimentResult run_mask_experiment(const MaskExperimentConfig& config,
                                         const IdxImages& digits);

// Mask region sums over a trained model and test data; used by the experiment
// and by the masks CLI report. Accumulates into sums/counts [branch][region].
void accumulate_mask_regions(PredictorParams<float>& model,
                             const SeqDataset<float>& test,
                             const std::vector<SequenceSample>& test_raw,
                             int batch, int patch,
                             std::vector<std::vector<double>>& sums,
                             std::vector<std::vector<std::int64_t>>& counts);

extern template std::vector<GateStatsRow> gate_statistics<float>(
    PredictorParams<float>&, const SeqBatch<float>&, std::vector<Tensor<float>>*);
extern template std::vector<GateStatsRow> gate_statistics<double>(
    PredictorParams<double>&, const SeqBatch<double>&, std::vector<Tensor<double>>*);

}  // namespace mklstm
