#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mklstm/attention.hpp"
#include "mklstm/autodiff.hpp"
#include "mklstm/cells.hpp"

namespace mklstm {

// Encoder-decoder future predictor: the encoder reads T_in frames into a
// fixed-size state, the decoder (separate parameters) is initialized with it
// and generates T_out feature maps, each reconstructed by a shared 1x1
// convolution + sigmoid.

struct PredictorConfig {
  int t_in = 10, t_out = 10;
  int height = 16, width = 16, in_channels = 16;  // patchified frame dims
  MultiKernelSpec spec;
  Peephole peephole = Peephole::per_channel;
  bool decoder_feedback = false;  // default: all-zero decoder inputs
  int flow_channels = 0;          // > 0 when any branch is attended

  bool attention() const { return spec.attended_count() > 0; }
};

template <typename T>
struct PredictorParams {
  PredictorConfig config;
  CellParams<T> encoder, decoder;
  Tensor<T> w_rec, b_rec;  // (1,1,C,in_channels), (1,1,1,in_channels)
  std::vector<MaskGenParams<T>> maskgens;  // encoder side, attended branches
};

template <typename T>
PredictorParams<T> make_predictor(const PredictorConfig& config,
                                  std::uint64_t seed);

template <typename T>
std::vector<NamedTensorRef<T>> predictor_param_refs(PredictorParams<T>& p);

template <typename T>
struct PredictorVars {
  CellVars<T> encoder, decoder;
  Var<T> w_rec, b_rec;
  std::vector<MaskGenVars<T>> maskgens;
};

template <typename T>
PredictorVars<T> bind_predictor(Tape<T>& tape, PredictorParams<T>& params,
                                bool requires_grad);

// Bound leaves in predictor_param_refs order.
template <typename T>
std::vector<Var<T>> predictor_leaves(const PredictorVars<T>& vars);

// One training/eval batch; frames indexed by timestep, each (N,H,W,C).
template <typename T>
struct SeqBatch {
  std::vector<Tensor<T>> inputs;   // t_in frames
  std::vector<Tensor<T>> targets;  // t_out frames, values in [0,1]
  std::vector<Tensor<T>> flows;    // t_in flow frames; empty when unattended
};

template <typename T>
struct ForwardTrace {
  GateTrace<T>* encoder_gates = nullptr;
  std::vector<std::vector<Var<T>>>* encoder_masks = nullptr;  // per timestep
};

template <typename T>
StateVars<T> encode(Tape<T>& tape, const PredictorVars<T>& vars,
                    const PredictorConfig& config,
                    const std::vector<Tensor<T>>& inputs,
                    const std::vector<Tensor<T>>& flows,
                    const ForwardTrace<T>* trace = nullptr);

// Decoder features h_1..h_Tout from the encoder state; zero input frames
// unless feedback mode routes each reconstruction into the next step.
template <typename T>
std::vector<Var<T>> decode(Tape<T>& tape, const PredictorVars<T>& vars,
                           const PredictorConfig& config, StateVars<T> state,
                           int t_out);

template <typename T>
Var<T> reconstruct(Tape<T>& tape, const PredictorVars<T>& vars, Var<T> features);

// L = (1/N) * sum over batch of -(sum over time+pixels)[p log q + (1-p) log(1-q)]
template <typename T>
Var<T> sce_loss(Tape<T>& tape, const std::vector<Var<T>>& predictions,
                const std::vector<Tensor<T>>& targets);

template <typename T>
struct ForwardResult {
  Var<T> loss;
  std::vector<Var<T>> predictions;

  double loss_value() const { return double(loss.value().data[0]); }
};

template <typename T>
ForwardResult<T> forward(Tape<T>& tape, const PredictorVars<T>& vars,
                         const PredictorConfig& config, const SeqBatch<T>& batch,
                         const ForwardTrace<T>* trace = nullptr);

// Elements per sample in the prediction block (t_out * H * W * C).
std::int64_t prediction_elements(const PredictorConfig& config);

#define MKLSTM_PRED_DECL(T)                                                       \
  extern template struct PredictorParams<T>;                                      \
  extern template PredictorParams<T> make_predictor<T>(const PredictorConfig&,    \
                                                       std::uint64_t);            \
  extern template std::vector<NamedTensorRef<T>> predictor_param_refs<T>(         \
      PredictorParams<T>&);                                                       \
  extern template PredictorVars<T> bind_predictor<T>(Tape<T>&,                    \
                                                     PredictorParams<T>&, bool);  \
  extern template std::vector<Var<T>> predictor_leaves<T>(const PredictorVars<T>&); \
  extern template StateVars<T> encode<T>(Tape<T>&, const PredictorVars<T>&,       \
                                         const PredictorConfig&,                  \
                                         const std::vector<Tensor<T>>&,           \
                                         const std::vector<Tensor<T>>&,           \
                                         const ForwardTrace<T>*);                 \
  extern template std::vector<Var<T>> decode<T>(Tape<T>&,                         \
                                                const PredictorVars<T>&,          \
                                                const PredictorConfig&,           \
                                                StateVars<T>, int);               \
  extern template Var<T> reconstruct<T>(Tape<T>&, const PredictorVars<T>&,        \
                                        Var<T>);                                  \
  extern template Var<T> sce_loss<T>(Tape<T>&, const std::vector<Var<T>>&,        \
                                     const std::vector<Tensor<T>>&);              \
  extern template ForwardResult<T> forward<T>(Tape<T>&, const PredictorVars<T>&,  \
                                              const PredictorConfig&,             \
                                              const SeqBatch<T>&,                 \
                                              const ForwardTrace<T>*);
MKLSTM_PRED_DECL(float)
MKLSTM_PRED_DECL(double)
#undef MKLSTM_PRED_DECL

}  // namespace mklstm
