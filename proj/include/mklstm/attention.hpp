#pragma once

#include <cstdint>
#include <vector>

#include "mklstm/autodiff.hpp"
#include "mklstm/cells.hpp"

namespace mklstm {

// Flow-based attention: one sigmoid-activated convolution per attended
// branch, over optical-flow features, multiplied into that branch's input.

template <typename T>
struct MaskGenParams {
  Tensor<T> w;  // (k,k,flow_channels,feature_channels); k = branch kernel
  Tensor<T> b;  // (1,1,1,feature_channels)
};

template <typename T>
struct MaskGenVars {
  Var<T> w, b;
};

// One generator per attended branch, kernel size matching the branch.
template <typename T>
std::vector<MaskGenParams<T>> make_mask_generators(const MultiKernelSpec& spec,
                                                   int flow_channels,
                                                   int feature_channels,
                                                   std::uint64_t seed);

template <typename T>
std::vector<NamedTensorRef<T>> mask_gen_param_refs(
    std::vector<MaskGenParams<T>>& gens, const std::string& prefix);

template <typename T>
std::vector<MaskGenVars<T>> bind_mask_generators(
    Tape<T>& tape, std::vector<MaskGenParams<T>>& gens, bool requires_grad,
    const std::string& prefix);

// masks m_i = sigmoid(conv(flow, w_i) + b_i), one per attended branch,
// each shaped like the input features and valued in (0,1).
template <typename T>
std::vector<Var<T>> generate_masks(Tape<T>& tape,
                                   const std::vector<MaskGenVars<T>>& gens,
                                   Var<T> flow, const MultiKernelSpec& spec);

// Per-branch inputs: attended branches consume x ∘ m_i, others consume x.
template <typename T>
std::vector<Var<T>> apply_masks(Tape<T>& tape, Var<T> x,
                                const std::vector<Var<T>>& masks,
                                const MultiKernelSpec& spec);

// Mean mask activation per (branch, region). Masks are in patchified layout;
// each element maps to one canvas pixel through the patch transform, where
// region labels live. labels: batch * label_h * label_w entries, values in
// [0, num_regions).
template <typename T>
std::vector<std::vector<double>> mask_region_statistics(
    const std::vector<Tensor<T>>& masks, const std::vector<std::uint8_t>& labels,
    int label_h, int label_w, int patch, int num_regions,
    std::vector<std::vector<std::int64_t>>* counts = nullptr);

#define MKLSTM_ATTN_DECL(T)                                                       \
  extern template std::vector<MaskGenParams<T>> make_mask_generators<T>(          \
      const MultiKernelSpec&, int, int, std::uint64_t);                           \
  extern template std::vector<NamedTensorRef<T>> mask_gen_param_refs<T>(          \
      std::vector<MaskGenParams<T>>&, const std::string&);                        \
  extern template std::vector<MaskGenVars<T>> bind_mask_generators<T>(            \
      Tape<T>&, std::vector<MaskGenParams<T>>&, bool, const std::string&);        \
  extern template std::vector<Var<T>> generate_masks<T>(                          \
      Tape<T>&, const std::vector<MaskGenVars<T>>&, Var<T>,                       \
      const MultiKernelSpec&);                                                    \
  extern template std::vector<Var<T>> apply_masks<T>(                             \
      Tape<T>&, Var<T>, const std::vector<Var<T>>&, const MultiKernelSpec&);      \
  extern template std::vector<std::vector<double>> mask_region_statistics<T>(     \
      const std::vector<Tensor<T>>&, const std::vector<std::uint8_t>&, int, int,  \
      int, int, std::vector<std::vector<std::int64_t>>*);
MKLSTM_ATTN_DECL(float)
MKLSTM_ATTN_DECL(double)
#undef MKLSTM_ATTN_DECL

}  // namespace mklstm
