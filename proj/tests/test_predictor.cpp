#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mklstm/gradcheck.hpp"
#include "mklstm/moving_mnist.hpp"
#include "mklstm/predictor.hpp"
#include "mklstm/train.hpp"
#include "oracles.hpp"

using namespace mklstm;
using oracle::max_rel_err;

namespace {

PredictorConfig tiny_config(int t_in = 2, int t_out = 2) {
  PredictorConfig cfg;
  cfg.t_in = t_in;
  cfg.t_out = t_out;
  cfg.height = 4;
  cfg.width = 4;
  cfg.in_channels = 2;
  cfg.spec = MultiKernelSpec::single(3, 3);
  cfg.peephole = Peephole::per_channel;
  return cfg;
}

std::vector<Tensor<double>> random_frames(int t, Shape s, Rng& rng, double lo,
                                          double hi) {
  std::vector<Tensor<double>> out;
  for (int i = 0; i < t; ++i) {
    Tensor<double> x(s);
    fill_uniform(x, rng, lo, hi);
    out.push_back(x);
  }
  return out;
}

}  // namespace

TEST_CASE("encode: zero parameters give a zero state; encoding is pure") {
  PredictorConfig cfg = tiny_config(1, 1);
  PredictorParams<double> model = make_predictor<double>(cfg, 3);
  for (auto& [name, tensor] : predictor_param_refs(model)) tensor->fill(0.0);
  Rng rng(5);
  auto frames = random_frames(1, {2, 4, 4, 2}, rng, -1, 1);
  Tape<double> tape;
  PredictorVars<double> vars = bind_predictor(tape, model, false);
  StateVars<double> st = encode(tape, vars, cfg, frames, {});
  for (const double& v : st.c.value().data) CHECK(v == 0.0);
  for (const double& v : st.h.value().data) CHECK(v == 0.0);

  StateVars<double> st2 = encode(tape, vars, cfg, frames, {});
  CHECK(st.c.value().data == st2.c.value().data);
  CHECK(st.h.value().data == st2.h.value().data);
}

TEST_CASE("encode over two frames matches stepping the cell by hand") {
  PredictorConfig cfg = tiny_config(2, 1);
  PredictorParams<double> model = make_predictor<double>(cfg, 7);
  Rng rng(9);
  auto frames = random_frames(2, {1, 4, 4, 2}, rng, -1, 1);

  Tape<double> tape;
  PredictorVars<double> vars = bind_predictor(tape, model, false);
  StateVars<double> got = encode(tape, vars, cfg, frames, {});

  CellVars<double> cell = bind_cell(tape, model.encoder, false, "manual");
  StateVars<double> st = zero_state(tape, 1, 4, 4, 3);
  st = convlstm_step(tape, cell, tape.leaf(frames[0]), st);
  st = convlstm_step(tape, cell, tape.leaf(frames[1]), st);
  CHECK(got.c.value().data == st.c.value().data);  // bitwise
  CHECK(got.h.value().data == st.h.value().data);
}

TEST_CASE("decode: zero state and parameters stay at zero; empty boundary") {
  PredictorConfig cfg = tiny_config(1, 3);
  PredictorParams<double> model = make_predictor<double>(cfg, 11);
  for (auto& [name, tensor] : predictor_param_refs(model)) tensor->fill(0.0);
  Tape<double> tape;
  PredictorVars<double> vars = bind_predictor(tape, model, false);
  StateVars<double> st = zero_state(tape, 2, 4, 4, 3);
  auto features = decode(tape, vars, cfg, st, 3);
  REQUIRE(features.size() == 3);
  for (const auto& f : features)
    for (const double& v : f.value().data) CHECK(v == 0.0);
  CHECK(decode(tape, vars, cfg, st, 0).empty());
}

TEST_CASE("decode matches hand-stepping the decoder with zero input frames") {
  PredictorConfig cfg = tiny_config(1, 2);
  PredictorParams<double> model = make_predictor<double>(cfg, 13);
  Rng rng(15);
  Tensor<double> c0(2, 4, 4, 3), h0(2, 4, 4, 3);
  fill_uniform(c0, rng, -1, 1);
  fill_uniform(h0, rng, -1, 1);

  Tape<double> tape;
  PredictorVars<double> vars = bind_predictor(tape, model, false);
  StateVars<double> st{tape.leaf(c0), tape.leaf(h0)};
  auto features = decode(tape, vars, cfg, st, 2);

  CellVars<double> cell = bind_cell(tape, model.decoder, false, "manual");
  StateVars<double> ms{tape.leaf(c0), tape.leaf(h0)};
  Tensor<double> zeros(2, 4, 4, 2);
  for (int t = 0; t < 2; ++t)
    ms = convlstm_step(tape, cell, tape.leaf(zeros), ms);
  // stepping with explicit zero frames equals the implicit zero-input path
  CHECK(max_rel_err(features[1].value(), ms.h.value()) < 1e-15);
}

TEST_CASE("reconstruct anchors: zero weights, saturated bias, random oracle") {
  PredictorConfig cfg = tiny_config();
  PredictorParams<double> model = make_predictor<double>(cfg, 17);
  Rng rng(19);
  Tensor<double> features(1, 4, 4, 3);
  fill_uniform(features, rng, -1, 1);

  {
    PredictorParams<double> zero = make_predictor<double>(cfg, 17);
    zero.w_rec.fill(0.0);
    zero.b_rec.fill(0.0);
    Tape<double> tape;
    PredictorVars<double> vars = bind_predictor(tape, zero, false);
    Var<double> pred = reconstruct(tape, vars, tape.leaf(features));
    for (const double& v : pred.value().data) CHECK(v == 0.5);
  }
  {
    PredictorParams<double> dark = make_predictor<double>(cfg, 17);
    dark.w_rec.fill(0.0);
    dark.b_rec.fill(-30.0);
    Tape<double> tape;
    PredictorVars<double> vars = bind_predictor(tape, dark, false);
    Var<double> pred = reconstruct(tape, vars, tape.leaf(features));
    for (const double& v : pred.value().data) CHECK(v < 1e-12);
  }
  {
    Tape<double> tape;
    PredictorVars<double> vars = bind_predictor(tape, model, false);
    Var<double> pred = reconstruct(tape, vars, tape.leaf(features));
    Tensor<double> ref = oracle::naive_conv2d(
        features, model.w_rec,
        std::vector<double>(model.b_rec.data.begin(), model.b_rec.data.end()));
    for (double& v : ref.data) v = oracle::sig(v);
    CHECK(max_rel_err(pred.value(), ref) < 1e-12);
  }
}

TEST_CASE("sce_loss anchors: ln 2 at 0.5, near zero for perfect predictions") {
  const int n = 2, elems = 4 * 4 * 2;
  Rng rng(21);
  Tape<double> tape;
  std::vector<Var<double>> preds;
  std::vector<Tensor<double>> targets;
  for (int t = 0; t < 3; ++t) {
    preds.push_back(tape.leaf(Tensor<double>(n, 4, 4, 2, 0.5)));
    Tensor<double> tgt(n, 4, 4, 2);
    fill_uniform(tgt, rng, 0, 1);
    targets.push_back(tgt);
  }
  Var<double> loss = sce_loss(tape, preds, targets);
  const double per_element = loss.value().data[0] / double(3 * elems);
  CHECK(per_element == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // perfect binary predictions: <= 1.7e-6 per element at eps = 1e-7
  std::vector<Var<double>> exact;
  std::vector<Tensor<double>> binary;
  for (int t = 0; t < 2; ++t) {
    Tensor<double> b(n, 4, 4, 2);
    for (std::size_t i = 0; i < b.data.size(); ++i)
      b.data[i] = (rng.next_u64() & 1) ? 1.0 : 0.0;
    binary.push_back(b);
    exact.push_back(tape.leaf(b));
  }
  Var<double> zero_loss = sce_loss(tape, exact, binary);
  CHECK(zero_loss.value().data[0] / double(2 * elems) <= 1.7e-6);
  CHECK(zero_loss.value().data[0] >= 0.0);
}

TEST_CASE("sce_loss matches the scalar transcription on random data") {
  Rng rng(23);
  const int n = 3;
  Tape<double> tape;
  std::vector<Var<double>> preds;
  std::vector<Tensor<double>> pred_vals, targets;
  for (int t = 0; t < 4; ++t) {
    Tensor<double> p(n, 3, 3, 2), q(n, 3, 3, 2);
    fill_uniform(p, rng, 1e-4, 1.0 - 1e-4);
    fill_uniform(q, rng, 0.0, 1.0);
    preds.push_back(tape.leaf(p));
    pred_vals.push_back(p);
    targets.push_back(q);
  }
  Var<double> loss = sce_loss(tape, preds, targets);
  const double want = oracle::sce_oracle(pred_vals, targets);
  CHECK(loss.value().data[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("full encoder-decoder forward produces (0,1) predictions and a finite loss") {
  PredictorConfig cfg = tiny_config(3, 2);
  PredictorParams<double> model = make_predictor<double>(cfg, 29);
  Rng rng(31);
  SeqBatch<double> batch;
  batch.inputs = random_frames(3, {2, 4, 4, 2}, rng, 0, 1);
  batch.targets = random_frames(2, {2, 4, 4, 2}, rng, 0, 1);
  Tape<double> tape;
  PredictorVars<double> vars = bind_predictor(tape, model, false);
  ForwardResult<double> result = forward(tape, vars, cfg, batch);
  REQUIRE(result.predictions.size() == 2);
  for (const auto& p : result.predictions)
    for (const double& v : p.value().data) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  CHECK(result.loss_value() >= 0.0);
  CHECK(std::isfinite(result.loss_value()));
}

TEST_CASE("feedback decoding differs from zero-input decoding") {
  PredictorConfig cfg = tiny_config(2, 3);
  PredictorParams<double> model = make_predictor<double>(cfg, 37);
  Rng rng(41);
  SeqBatch<double> batch;
  batch.inputs = random_frames(2, {1, 4, 4, 2}, rng, 0, 1);
  batch.targets = random_frames(3, {1, 4, 4, 2}, rng, 0, 1);

  Tape<double> tape;
  PredictorVars<double> vars = bind_predictor(tape, model, false);
  ForwardResult<double> plain = forward(tape, vars, cfg, batch);
  PredictorConfig fb_cfg = cfg;
  fb_cfg.decoder_feedback = true;
  ForwardResult<double> fb = forward(tape, vars, fb_cfg, batch);
  // first frame identical (no feedback yet), later frames diverge
  CHECK(plain.predictions[0].value().data == fb.predictions[0].value().data);
  CHECK(plain.predictions[2].value().data != fb.predictions[2].value().data);
}

TEST_CASE("full model gradient check on a tiny instance") {
  PredictorConfig cfg;
  cfg.t_in = 2;
  cfg.t_out = 2;
  cfg.height = 4;
  cfg.width = 4;
  cfg.in_channels = 1;
  cfg.spec = MultiKernelSpec::single(3, 2);
  cfg.peephole = Peephole::per_channel;
  PredictorParams<double> model = make_predictor<double>(cfg, 43);
  Rng rng(47);
  SeqBatch<double> batch;
  batch.inputs = random_frames(2, {1, 4, 4, 1}, rng, 0, 1);
  batch.targets = random_frames(2, {1, 4, 4, 1}, rng, 0, 1);

  std::vector<std::pair<std::string, Tensor<double>>> params;
  for (auto& [name, tensor] : predictor_param_refs(model))
    params.emplace_back(name, *tensor);

  auto report = gradient_check(
      params,
      [&](Tape<double>& tape, const std::vector<Var<double>>& leaves) {
        PredictorParams<double> local = model;
        auto refs = predictor_param_refs(local);
        for (std::size_t i = 0; i < refs.size(); ++i)
          *refs[i].second = leaves[i].value();
        PredictorVars<double> vars;
        std::size_t li = 0;
        auto bind_from = [&](CellParams<double>& c) {
          CellVars<double> cv;
          cv.params = &c;
          for (std::size_t b = 0; b < c.branches.size(); ++b) {
            BranchVars<double> bv;
            bv.w_x = leaves[li++];
            bv.w_h = leaves[li++];
            cv.branches.push_back(bv);
          }
          cv.bias = leaves[li++];
          cv.w_ci = leaves[li++];
          cv.w_cf = leaves[li++];
          cv.w_co = leaves[li++];
          return cv;
        };
        vars.encoder = bind_from(local.encoder);
        vars.decoder = bind_from(local.decoder);
        vars.w_rec = leaves[li++];
        vars.b_rec = leaves[li++];
        ForwardResult<double> r = forward(tape, vars, cfg, batch);
        return r.loss;
      });
  CHECK(report.passed);
  CHECK(report.max_rel_err <= 1e-4);
}

TEST_CASE("learnability: 200 optimizer steps halve the loss on one batch") {
  // moving digits on a small canvas, patchified
  GeneratorConfig gen;
  gen.canvas = 16;
  gen.digit_size = 8;
  gen.frames = 4;
  gen.num_digits = 1;
  gen.speeds = {2.0};
  gen.patch = 2;
  IdxImages bank;
  bank.count = 2;
  bank.rows = 8;
  bank.cols = 8;
  bank.pixels.assign(2 * 8 * 8, 0.0f);
  for (int i = 2; i < 6; ++i)
    for (int j = 2; j < 6; ++j) {
      bank.pixels[std::size_t(i * 8 + j)] = 1.0f;
      bank.pixels[std::size_t(64 + i * 8 + j)] = (i + j) % 2 ? 1.0f : 0.6f;
    }

  SeqDataset<float> data;
  for (std::uint64_t i = 0; i < 4; ++i) {
    GeneratorConfig g = gen;
    g.seed = i;
    data.frames.push_back(patchify(generate_sequence(g, bank).frames, 2));
  }
  PredictorConfig cfg;
  cfg.t_in = 2;
  cfg.t_out = 2;
  cfg.height = 8;
  cfg.width = 8;
  cfg.in_channels = 4;
  cfg.spec = MultiKernelSpec::single(3, 8);
  PredictorParams<float> model = make_predictor<float>(cfg, 51);

  std::vector<int> idx = {0, 1, 2, 3};
  SeqBatch<float> batch = make_batch(data, idx, 2, 2, false);
  auto refs = predictor_param_refs(model);
  AdamState<float> adam = init_adam(refs);
  AdamConfig adam_cfg;

  const double baseline =
      std::log(2.0) * double(prediction_elements(cfg));  // p = 0.5 everywhere
  double first = 0, last = 0;
  for (int step = 0; step < 200; ++step) {
    Tape<float> tape;
    PredictorVars<float> vars = bind_predictor(tape, model, true);
    ForwardResult<float> r = forward(tape, vars, cfg, batch);
    if (step == 0) first = r.loss_value();
    last = r.loss_value();
    tape.backward(r.loss);
    auto leaves = predictor_leaves(vars);
    std::vector<Tensor<float>> grads;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const Tensor<float>* g = tape.grad_of(leaves[i]);
      grads.push_back(g != nullptr ? *g : Tensor<float>(refs[i].second->shape));
    }
    clip_gradients(grads, 10.0);
    adam_step(refs, grads, adam, adam_cfg);
  }
  CHECK(first <= baseline * 1.05);  // starts near the 0.5-prediction baseline
  CHECK(last <= 0.5 * baseline);
  CHECK(last < first);
}
