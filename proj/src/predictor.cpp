#include "mklstm/predictor.hpp"

#include <stdexcept>

namespace mklstm {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

std::int64_t prediction_elements(const PredictorConfig& config) {
  return std::int64_t(config.t_out) * config.height * config.width *
         config.in_channels;
}

template <typename T>
PredictorParams<T> make_predictor(const PredictorConfig& config,
                                  std::uint64_t seed) {
  require(config.t_in >= 1, "predictor: t_in must be >= 1");
  require(config.t_out >= 0, "predictor: t_out must be >= 0");
  require(!config.attention() || config.flow_channels > 0,
          "predictor: attended branches need flow_channels");
  PredictorParams<T> p;
  p.config = config;
  p.encoder = make_cell<T>(config.spec, config.in_channels, config.peephole,
                           Rng::derive(seed, 1), config.height, config.width);
  // The decoder never sees attended or masked input frames.
  MultiKernelSpec dec_spec = config.spec;
  for (Branch& b : dec_spec.branches) b.attended = false;
  p.decoder = make_cell<T>(dec_spec, config.in_channels, config.peephole,
                           Rng::derive(seed, 2), config.height, config.width);
  const int c = config.spec.hidden_channels();
  p.w_rec = Tensor<T>(1, 1, c, config.in_channels);
  p.b_rec = Tensor<T>(1, 1, 1, config.in_channels);
  Rng rng(Rng::derive(seed, 3));
  glorot_uniform(p.w_rec, c, config.in_channels, rng);
  p.b_rec.fill(T(0));
  if (config.attention())
    p.maskgens = make_mask_generators<T>(config.spec, config.flow_channels,
                                         config.in_channels, Rng::derive(seed, 4));
  return p;
}

template <typename T>
std::vector<NamedTensorRef<T>> predictor_param_refs(PredictorParams<T>& p) {
  std::vector<NamedTensorRef<T>> out = cell_param_refs(p.encoder, "enc");
  auto dec = cell_param_refs(p.decoder, "dec");
  out.insert(out.end(), dec.begin(), dec.end());
  out.emplace_back("rec.w", &p.w_rec);
  out.emplace_back("rec.b", &p.b_rec);
  auto gens = mask_gen_param_refs(p.maskgens, "attn");
  out.insert(out.end(), gens.begin(), gens.end());
  return out;
}

template <typename T>
PredictorVars<T> bind_predictor(Tape<T>& tape, PredictorParams<T>& params,
                                bool requires_grad) {
  PredictorVars<T> v;
  v.encoder = bind_cell(tape, params.encoder, requires_grad, "enc");
  v.decoder = bind_cell(tape, params.decoder, requires_grad, "dec");
  v.w_rec = tape.leaf(params.w_rec, requires_grad, "rec.w");
  v.b_rec = tape.leaf(params.b_rec, requires_grad, "rec.b");
  v.maskgens = bind_mask_generators(tape, params.maskgens, requires_grad, "attn");
  return v;
}

template <typename T>
std::vector<Var<T>> predictor_leaves(const PredictorVars<T>& vars) {
  std::vector<Var<T>> out;
  cell_leaves(vars.encoder, out);
  cell_leaves(vars.decoder, out);
  out.push_back(vars.w_rec);
  out.push_back(vars.b_rec);
  for (const MaskGenVars<T>& g : vars.maskgens) {
    out.push_back(g.w);
    out.push_back(g.b);
  }
  return out;
}

template <typename T>
StateVars<T> encode(Tape<T>& tape, const PredictorVars<T>& vars,
                    const PredictorConfig& config,
                    const std::vector<Tensor<T>>& inputs,
                    const std::vector<Tensor<T>>& flows,
                    const ForwardTrace<T>* trace) {
  require(!inputs.empty(), "encode: empty input sequence");
  const bool attended = config.attention();
  if (attended)
    require(flows.size() == inputs.size(),
            "encode: attention needs one flow frame per input frame (" +
                std::to_string(flows.size()) + " vs " +
                std::to_string(inputs.size()) + ")");
  const Shape s0 = inputs[0].shape;
  StateVars<T> state = zero_state(tape, s0.n, s0.h, s0.w,
                                  config.spec.hidden_channels());
  GateTrace<T>* gates = trace != nullptr ? trace->encoder_gates : nullptr;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Var<T> x = tape.leaf(inputs[t]);
    if (attended) {
      Var<T> flow = tape.leaf(flows[t]);
      std::vector<Var<T>> masks =
          generate_masks(tape, vars.maskgens, flow, config.spec);
      if (trace != nullptr && trace->encoder_masks != nullptr)
        trace->encoder_masks->push_back(masks);
      state = multikernel_step(tape, vars.encoder, x, state, &masks, gates);
    } else {
      state = multikernel_step(tape, vars.encoder, x, state,
                               static_cast<const std::vector<Var<T>>*>(nullptr),
                               gates);
    }
  }
  return state;
}

template <typename T>
std::vector<Var<T>> decode(Tape<T>& tape, const PredictorVars<T>& vars,
                           const PredictorConfig& config, StateVars<T> state,
                           int t_out) {
  std::vector<Var<T>> features;
  Var<T> feedback;  // invalid: zero input frame
  for (int t = 0; t < t_out; ++t) {
    state = multikernel_step(tape, vars.decoder, feedback, state,
                             static_cast<const std::vector<Var<T>>*>(nullptr),
                             static_cast<GateTrace<T>*>(nullptr));
    features.push_back(state.h);
    if (config.decoder_feedback)
      feedback = reconstruct(tape, vars, state.h);
  }
  return features;
}

template <typename T>
Var<T> reconstruct(Tape<T>& tape, const PredictorVars<T>& vars, Var<T> features) {
  return sigmoid(conv2d(features, vars.w_rec, vars.b_rec));
}

template <typename T>
Var<T> sce_loss(Tape<T>& tape, const std::vector<Var<T>>& predictions,
                const std::vector<Tensor<T>>& targets) {
  require(predictions.size() == targets.size(),
          "sce_loss: " + std::to_string(predictions.size()) +
              " predictions vs " + std::to_string(targets.size()) + " targets");
  require(!predictions.empty(), "sce_loss: empty sequence");
  Var<T> total;
  for (std::size_t t = 0; t < predictions.size(); ++t) {
    Var<T> frame = sce_sum(predictions[t], targets[t]);
    total = t == 0 ? frame : add(total, frame);
  }
  const int batch = predictions[0].shape().n;
  return scale(total, T(1) / T(batch));
}

template <typename T>
ForwardResult<T> forward(Tape<T>& tape, const PredictorVars<T>& vars,
                         const PredictorConfig& config, const SeqBatch<T>& batch,
                         const ForwardTrace<T>* trace) {
  require(int(batch.inputs.size()) == config.t_in,
          "forward: batch has " + std::to_string(batch.inputs.size()) +
              " input frames, config says " + std::to_string(config.t_in));
  require(int(batch.targets.size()) == config.t_out,
          "forward: batch has " + std::to_string(batch.targets.size()) +
              " target frames, config says " + std::to_string(config.t_out));
  StateVars<T> state =
      encode(tape, vars, config, batch.inputs, batch.flows, trace);
  std::vector<Var<T>> features = decode(tape, vars, config, state, config.t_out);
  ForwardResult<T> result;
  for (Var<T> f : features)
    result.predictions.push_back(reconstruct(tape, vars, f));
  result.loss = sce_loss(tape, result.predictions, batch.targets);
  return result;
}

#define MKLSTM_PRED_DEF(T)                                                        \
  template struct PredictorParams<T>;                                             \
  template PredictorParams<T> make_predictor<T>(const PredictorConfig&,           \
                                                std::uint64_t);                   \
  template std::vector<NamedTensorRef<T>> predictor_param_refs<T>(                \
      PredictorParams<T>&);                                                       \
  template PredictorVars<T> bind_predictor<T>(Tape<T>&, PredictorParams<T>&,      \
                                              bool);                              \
  template std::vector<Var<T>> predictor_leaves<T>(const PredictorVars<T>&);      \
  template StateVars<T> encode<T>(Tape<T>&, const PredictorVars<T>&,              \
                                  const PredictorConfig&,                         \
                                  const std::vector<Tensor<T>>&,                  \
                                  const std::vector<Tensor<T>>&,                  \
                                  const ForwardTrace<T>*);                        \
  template std::vector<Var<T>> decode<T>(Tape<T>&, const PredictorVars<T>&,       \
                                         const PredictorConfig&, StateVars<T>,    \
                                         int);                                    \
  template Var<T> reconstruct<T>(Tape<T>&, const PredictorVars<T>&, Var<T>);      \
  template Var<T> sce_loss<T>(Tape<T>&, const std::vector<Var<T>>&,               \
                              const std::vector<Tensor<T>>&);                     \
  template ForwardResult<T> forward<T>(Tape<T>&, const PredictorVars<T>&,         \
                                       const PredictorConfig&,                    \
                                       const SeqBatch<T>&,                        \
                                       const ForwardTrace<T>*);
MKLSTM_PRED_DEF(float)
MKLSTM_PRED_DEF(double)
#undef MKLSTM_PRED_DEF

}  // namespace mklstm
