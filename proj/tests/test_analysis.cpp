#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mklstm/analysis.hpp"
#include "mklstm/io.hpp"
#include "oracles.hpp"

using namespace mklstm;

namespace {

std::string temp_dir(const std::string& name) {
  const std::string dir =
      (std::filesystem::temp_directory_path() / name).string();
  std::filesystem::remove_all(dir);
  return dir;
}

IdxImages digit_bank() {
  static IdxImages bank = crop_center(synthetic_digits(4, 5), 22);
  return bank;
}

}  // namespace

TEST_CASE("velocity_histogram: zero flow puts all mass in the first bin") {
  std::vector<Tensor<float>> flows = {Tensor<float>(4, 8, 8, 2, 0.0f)};
  VelocityHistogram hist = velocity_histogram(flows, 40);
  CHECK(hist.per_video[0][0] == doctest::Approx(1.0));
  for (int b = 1; b < 40; ++b) CHECK(hist.per_video[0][std::size_t(b)] == 0.0);
}

TEST_CASE("velocity_histogram: uniform (3,4) flow lands at v = 25") {
  Tensor<float> flow(2, 4, 4, 2);
  for (std::int64_t i = 0; i < flow.size() / 2; ++i) {
    flow.data[std::size_t(2 * i)] = 3.0f;
    flow.data[std::size_t(2 * i + 1)] = 4.0f;
  }
  VelocityHistogram hist = velocity_histogram({flow}, 40);
  // 40 bins over [0, 800]: v = 25 falls in bin [20, 40)
  CHECK(hist.per_video[0][1] == doctest::Approx(1.0));
  double mass = 0;
  for (double m : hist.per_video[0]) mass += m;
  CHECK(mass == doctest::Approx(1.0));
}

TEST_CASE("velocity_histogram clips components at magnitude 20") {
  Tensor<float> flow(1, 2, 2, 2);
  for (std::int64_t i = 0; i < 4; ++i) {
    flow.data[std::size_t(2 * i)] = 25.0f;  // clipped to 20 -> contributes 400
    flow.data[std::size_t(2 * i + 1)] = 0.0f;
  }
  VelocityHistogram hist = velocity_histogram({flow}, 40);
  // v = 400 exactly: bin 20 covers [400, 420)
  CHECK(hist.per_video[0][20] == doctest::Approx(1.0));
}

TEST_CASE("velocity_histogram normalizes per video before averaging") {
  std::vector<Tensor<float>> flows = {Tensor<float>(1, 4, 4, 2, 0.0f),
                                      Tensor<float>(1, 8, 8, 2, 0.0f)};
  flows[1].data[0] = 3.0f;
  flows[1].data[1] = 4.0f;
  VelocityHistogram hist = velocity_histogram(flows, 40);
  for (const auto& pv : hist.per_video) {
    double mass = 0;
    for (double m : pv) mass += m;
    CHECK(mass == doctest::Approx(1.0));
  }
  CHECK(hist.mean[0] ==
        doctest::Approx(0.5 * (1.0 + 63.0 / 64.0)));
}

TEST_CASE("gate_statistics: zero-parameter model gives exact 0.5 gate means") {
  PredictorConfig cfg;
  cfg.t_in = 3;
  cfg.t_out = 2;
  cfg.height = 4;
  cfg.width = 4;
  cfg.in_channels = 2;
  cfg.spec = MultiKernelSpec::single(3, 4);
  PredictorParams<float> model = make_predictor<float>(cfg, 3);
  for (auto& [name, tensor] : predictor_param_refs(model)) tensor->fill(0.0f);
  SeqBatch<float> batch;
  Rng rng(5);
  for (int t = 0; t < 3; ++t) {
    Tensor<float> x(2, 4, 4, 2);
    fill_uniform(x, rng, 0, 1);
    batch.inputs.push_back(x);
  }
  auto rows = gate_statistics(model, batch);
  REQUIRE(rows.size() == 3 * 4);
  for (const auto& row : rows) {
    if (row.gate == "cell") {
      CHECK(row.mean == 0.0);
    } else {
      CHECK(row.mean == 0.5);
    }
    CHECK(row.saturation == 0.0);
  }
}

TEST_CASE("gate_statistics: a -30 forget bias saturates the forget gate") {
  PredictorConfig cfg;
  cfg.t_in = 2;
  cfg.t_out = 2;
  cfg.height = 4;
  cfg.width = 4;
  cfg.in_channels = 2;
  cfg.spec = MultiKernelSpec::single(3, 4);
  PredictorParams<float> model = make_predictor<float>(cfg, 7);
  for (int j = 4; j < 8; ++j) model.encoder.bias.data[std::size_t(j)] = -30.0f;
  SeqBatch<float> batch;
  Rng rng(9);
  for (int t = 0; t < 2; ++t) {
    Tensor<float> x(1, 4, 4, 2);
    fill_uniform(x, rng, 0, 1);
    batch.inputs.push_back(x);
  }
  auto rows = gate_statistics(model, batch);
  for (const auto& row : rows)
    if (row.gate == "forget") CHECK(row.saturation > 0.99);
}

TEST_CASE("gate_statistics matches a scalar recount of the dumped maps") {
  PredictorConfig cfg;
  cfg.t_in = 2;
  cfg.t_out = 2;
  cfg.height = 4;
  cfg.width = 4;
  cfg.in_channels = 2;
  cfg.spec = MultiKernelSpec::single(3, 4);
  PredictorParams<float> model = make_predictor<float>(cfg, 11);
  SeqBatch<float> batch;
  Rng rng(13);
  for (int t = 0; t < 2; ++t) {
    Tensor<float> x(2, 4, 4, 2);
    fill_uniform(x, rng, 0, 1);
    batch.inputs.push_back(x);
  }
  std::vector<Tensor<float>> maps;
  auto rows = gate_statistics(model, batch, &maps);
  REQUIRE(maps.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double sum = 0, sq = 0, sat = 0;
    const bool is_tanh = rows[i].gate == "cell";
    for (const float& v : maps[i].data) {
      sum += v;
      sq += double(v) * double(v);
      if (is_tanh ? std::abs(v) > 0.95 : (v < 0.05 || v > 0.95)) sat += 1;
    }
    const double n = double(maps[i].size());
    CHECK(rows[i].mean == doctest::Approx(sum / n).epsilon(1e-12));
    CHECK(rows[i].stddev ==
          doctest::Approx(std::sqrt(std::max(0.0, sq / n - (sum / n) * (sum / n))))
              .epsilon(1e-9));
    CHECK(rows[i].saturation == doctest::Approx(sat / n).epsilon(1e-12));
  }
}

TEST_CASE("build_datasets derives per-sample seeds deterministically") {
  GeneratorConfig gen;
  gen.frames = 6;
  gen.num_digits = 1;
  gen.speeds = {2.0};
  ExperimentData a = build_datasets(gen, 3, 2, 42, digit_bank(), true);
  ExperimentData b = build_datasets(gen, 3, 2, 42, digit_bank(), true);
  REQUIRE(a.train.size() == 3);
  REQUIRE(a.test.size() == 2);
  REQUIRE(a.test_raw.size() == 2);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(a.train.frames[i].data == b.train.frames[i].data);
  CHECK(a.train.frames[0].data != a.train.frames[1].data);
  CHECK(a.train.flows[0].shape == Shape{6, 16, 16, 32});
}

TEST_CASE("run_speed_sweep: single cell, reuse, and failure recording") {
  SweepConfig cfg;
  cfg.speeds = {2.0};
  cfg.configs = {{"3x3", MultiKernelSpec::single(3, 4)}};
  cfg.train_size = 4;
  cfg.test_size = 2;
  cfg.epochs = 1;
  cfg.batch = 2;
  cfg.replicates = 1;
  cfg.gen.frames = 6;
  cfg.gen.num_digits = 1;
  cfg.gen.speeds = {2.0};
  cfg.t_in = 3;
  cfg.t_out = 3;
  cfg.out_dir = temp_dir("mklstm_sweep_test");

  SweepResult first = run_speed_sweep(cfg, digit_bank());
  REQUIRE(first.cells.size() == 1);
  CHECK(first.cells[0].ok);
  CHECK(first.cells[0].final_test_sce > 0);
  CHECK(io::file_exists(first.csv_path));

  // second run reuses the completed cell and reproduces the same number
  SweepResult second = run_speed_sweep(cfg, digit_bank());
  CHECK(second.cells[0].final_test_sce == first.cells[0].final_test_sce);

  // full retrain without reuse is bitwise identical (determinism)
  SweepConfig fresh = cfg;
  fresh.out_dir = temp_dir("mklstm_sweep_fresh");
  fresh.reuse_completed = false;
  SweepResult retrained = run_speed_sweep(fresh, digit_bank());
  CHECK(retrained.cells[0].final_test_sce == first.cells[0].final_test_sce);
  std::filesystem::remove_all(fresh.out_dir);

  // a failing cell is recorded and does not abort the sweep
  SweepConfig bad = cfg;
  bad.out_dir = temp_dir("mklstm_sweep_bad");
  bad.train_size = 0;
  SweepResult failed = run_speed_sweep(bad, digit_bank());
  REQUIRE(failed.cells.size() == 1);
  CHECK_FALSE(failed.cells[0].ok);
  CHECK(!failed.cells[0].error.empty());

  std::filesystem::remove_all(cfg.out_dir);
  std::filesystem::remove_all(bad.out_dir);
}

TEST_CASE("sweep deltas compare the first two configs per (speed, seed)") {
  SweepConfig cfg;
  cfg.speeds = {2.0};
  cfg.configs = {{"a", MultiKernelSpec::single(1, 4)},
                 {"b", MultiKernelSpec::single(3, 4)}};
  cfg.train_size = 4;
  cfg.test_size = 2;
  cfg.epochs = 1;
  cfg.batch = 2;
  cfg.replicates = 1;
  cfg.gen.frames = 6;
  cfg.gen.num_digits = 1;
  cfg.gen.speeds = {2.0};
  cfg.t_in = 3;
  cfg.t_out = 3;
  cfg.out_dir = temp_dir("mklstm_sweep_delta");
  SweepResult result = run_speed_sweep(cfg, digit_bank());
  REQUIRE(result.deltas.size() == 1);
  const auto& [speed, rep, delta] = result.deltas[0];
  CHECK(speed == 2.0);
  CHECK(rep == 0);
  const double a = result.find(2.0, "a", 0)->final_test_sce;
  const double b = result.find(2.0, "b", 0)->final_test_sce;
  CHECK(delta == doctest::Approx(a - b));
  CHECK(io::file_exists(result.delta_csv_path));
  std::filesystem::remove_all(cfg.out_dir);
}
