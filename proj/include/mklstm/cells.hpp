#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mklstm/autodiff.hpp"
#include "mklstm/tensor.hpp"

namespace mklstm {

// Gate order throughout: input, forget, output, candidate (i, f, o, g).

enum class Fusion { interleave, one_by_one };
enum class Peephole { none, per_channel, full_state };

struct Branch {
  int kernel = 3;      // odd, square
  int channels = 0;    // C_k
  int bottleneck = 0;  // 0 = none; else 1x1 pre-conv to this many channels
  bool attended = false;
};

struct MultiKernelSpec {
  std::vector<Branch> branches;
  Fusion fusion = Fusion::interleave;
  bool fusion_tanh = false;  // tanh on branch outputs before the 1x1 fusion
  int out_channels = 0;      // hidden channels under one_by_one fusion

  int sum_branch_channels() const;
  int hidden_channels() const;  // sum of C_k, or out_channels for one_by_one
  int attended_count() const;
  std::string label() const;  // e.g. "3x3x32", "3x3+5x5x16"

  static MultiKernelSpec single(int kernel, int channels);
};

struct ParamCount {
  std::int64_t weights = 0;
  std::int64_t biases = 0;
};

// Table convention: input-to-hidden weights (plus per-gate 1x1 fusion weights
// when present) and the 4*C gate biases. Hidden-to-hidden and peephole terms
// are reported by the full count below.
ParamCount count_parameters(const MultiKernelSpec& spec, int c_in);
ParamCount count_parameters_full(const MultiKernelSpec& spec, int c_in,
                                 Peephole peephole, int state_h = 0,
                                 int state_w = 0);

template <typename T>
struct BranchParams {
  Tensor<T> w_x;      // (k,k,c_in or bottleneck,4*C_k)
  Tensor<T> w_h;      // (k,k,C,4*C_k)
  Tensor<T> w_bneck;  // (1,1,c_in,bottleneck), empty when no bottleneck
};

template <typename T>
struct CellParams {
  MultiKernelSpec spec;
  int in_channels = 0;
  Peephole peephole = Peephole::per_channel;
  std::vector<BranchParams<T>> branches;
  Tensor<T> w_fuse;  // (1,1,sum C_k,4*out) under one_by_one, else empty
  Tensor<T> bias;    // (1,1,1,4*C); branch convolutions are bias-free
  Tensor<T> w_ci, w_cf, w_co;  // (1,1,1,C) or (1,H,W,C); empty when disabled
};

template <typename T>
using NamedTensorRef = std::pair<std::string, Tensor<T>*>;

template <typename T>
CellParams<T> make_cell(const MultiKernelSpec& spec, int in_channels,
                        Peephole peephole, std::uint64_t seed, int state_h = 0,
                        int state_w = 0);

// Fan-based uniform init; forget-gate bias 1, all other biases and peepholes 0.
template <typename T>
void init_weights(CellParams<T>& cell, std::uint64_t seed);

template <typename T>
void glorot_uniform(Tensor<T>& t, std::int64_t fan_in, std::int64_t fan_out,
                    Rng& rng);

// Deterministic enumeration of every learnable tensor in the cell.
template <typename T>
std::vector<NamedTensorRef<T>> cell_param_refs(CellParams<T>& cell,
                                               const std::string& prefix);

// ---- tape-bound forms -------------------------------------------------------

template <typename T>
struct BranchVars {
  Var<T> w_x, w_h, w_bneck;
};

template <typename T>
struct CellVars {
  const CellParams<T>* params = nullptr;
  std::vector<BranchVars<T>> branches;
  Var<T> w_fuse, bias, w_ci, w_cf, w_co;
};

template <typename T>
struct StateVars {
  Var<T> c, h;
};

// Gate activations recorded per step (after sigma / tanh) for diagnostics.
template <typename T>
struct GateTrace {
  std::vector<Var<T>> input_gate, forget_gate, output_gate, cell_act;
};

template <typename T>
CellVars<T> bind_cell(Tape<T>& tape, CellParams<T>& cell, bool requires_grad,
                      const std::string& prefix);

// Bound leaves in cell_param_refs order (for gradient collection).
template <typename T>
void cell_leaves(const CellVars<T>& vars, std::vector<Var<T>>& out);

template <typename T>
StateVars<T> zero_state(Tape<T>& tape, int batch, int height, int width,
                        int channels);

// Classic fully connected LSTM step on (N,1,1,C) tensors. Uses the dense
// scalar-product route, deliberately separate from the convolutional path.
template <typename T>
StateVars<T> fclstm_step(Tape<T>& tape, const CellVars<T>& cell, Var<T> x,
                         StateVars<T> prev);

// Single-kernel convolutional step.
template <typename T>
StateVars<T> convlstm_step(Tape<T>& tape, const CellVars<T>& cell, Var<T> x,
                           StateVars<T> prev, GateTrace<T>* trace = nullptr);

// Fused 4*C-channel pre-activation of a multi-kernel cell. masks carries one
// entry per attended branch, in branch order; pass nullptr when unused.
template <typename T>
Var<T> multikernel_preactivation(Tape<T>& tape, const CellVars<T>& cell,
                                 Var<T> x, Var<T> h_prev,
                                 const std::vector<Var<T>>* masks = nullptr);

template <typename T>
StateVars<T> multikernel_step(Tape<T>& tape, const CellVars<T>& cell, Var<T> x,
                              StateVars<T> prev,
                              const std::vector<Var<T>>* masks = nullptr,
                              GateTrace<T>* trace = nullptr);

#define MKLSTM_CELLS_DECL(T)                                                      \
  extern template struct CellParams<T>;                                           \
  extern template CellParams<T> make_cell<T>(const MultiKernelSpec&, int,         \
                                             Peephole, std::uint64_t, int, int);  \
  extern template void init_weights<T>(CellParams<T>&, std::uint64_t);            \
  extern template void glorot_uniform<T>(Tensor<T>&, std::int64_t, std::int64_t,  \
                                         Rng&);                                   \
  extern template std::vector<NamedTensorRef<T>> cell_param_refs<T>(              \
      CellParams<T>&, const std::string&);                                        \
  extern template CellVars<T> bind_cell<T>(Tape<T>&, CellParams<T>&, bool,        \
                                           const std::string&);                   \
  extern template void cell_leaves<T>(const CellVars<T>&, std::vector<Var<T>>&);  \
  extern template StateVars<T> zero_state<T>(Tape<T>&, int, int, int, int);       \
  extern template StateVars<T> fclstm_step<T>(Tape<T>&, const CellVars<T>&,       \
                                              Var<T>, StateVars<T>);              \
  extern template StateVars<T> convlstm_step<T>(Tape<T>&, const CellVars<T>&,     \
                                                Var<T>, StateVars<T>,             \
                                                GateTrace<T>*);                   \
  extern template Var<T> multikernel_preactivation<T>(                            \
      Tape<T>&, const CellVars<T>&, Var<T>, Var<T>, const std::vector<Var<T>>*);  \
  extern template StateVars<T> multikernel_step<T>(                               \
      Tape<T>&, const CellVars<T>&, Var<T>, StateVars<T>,                         \
      const std::vector<Var<T>>*, GateTrace<T>*);
MKLSTM_CELLS_DECL(float)
MKLSTM_CELLS_DECL(double)
#undef MKLSTM_CELLS_DECL

}  // namespace mklstm
