#include "mklstm/attention.hpp"

#include <stdexcept>

namespace mklstm {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

template <typename T>
std::vector<MaskGenParams<T>> make_mask_generators(const MultiKernelSpec& spec,
                                                   int flow_channels,
                                                   int feature_channels,
                                                   std::uint64_t seed) {
  require(flow_channels >= 1 && feature_channels >= 1,
          "mask generators: channel counts must be >= 1");
  Rng rng(seed);
  std::vector<MaskGenParams<T>> out;
  for (const Branch& b : spec.branches) {
    if (!b.attended) continue;
    MaskGenParams<T> g;
    g.w = Tensor<T>(b.kernel, b.kernel, flow_channels, feature_channels);
    g.b = Tensor<T>(1, 1, 1, feature_channels);
    const std::int64_t k2 = std::int64_t(b.kernel) * b.kernel;
    glorot_uniform(g.w, k2 * flow_channels, k2 * feature_channels, rng);
    g.b.fill(T(0));
    out.push_back(std::move(g));
  }
  return out;
}

template <typename T>
std::vector<NamedTensorRef<T>> mask_gen_param_refs(
    std::vector<MaskGenParams<T>>& gens, const std::string& prefix) {
  std::vector<NamedTensorRef<T>> out;
  for (std::size_t i = 0; i < gens.size(); ++i) {
    const std::string gp = prefix + ".g" + std::to_string(i);
    out.emplace_back(gp + ".w", &gens[i].w);
    out.emplace_back(gp + ".b", &gens[i].b);
  }
  return out;
}

template <typename T>
std::vector<MaskGenVars<T>> bind_mask_generators(
    Tape<T>& tape, std::vector<MaskGenParams<T>>& gens, bool requires_grad,
    const std::string& prefix) {
  std::vector<MaskGenVars<T>> out;
  for (std::size_t i = 0; i < gens.size(); ++i) {
    const std::string gp = prefix + ".g" + std::to_string(i);
    MaskGenVars<T> v;
    v.w = tape.leaf(gens[i].w, requires_grad, gp + ".w");
    v.b = tape.leaf(gens[i].b, requires_grad, gp + ".b");
    out.push_back(v);
  }
  return out;
}

template <typename T>
std::vector<Var<T>> generate_masks(Tape<T>& tape,
                                   const std::vector<MaskGenVars<T>>& gens,
                                   Var<T> flow, const MultiKernelSpec& spec) {
  require(int(gens.size()) == spec.attended_count(),
          "generate_masks: " + std::to_string(gens.size()) + " generators for " +
              std::to_string(spec.attended_count()) + " attended branches");
  std::vector<Var<T>> masks;
  masks.reserve(gens.size());
  for (const MaskGenVars<T>& g : gens)
    masks.push_back(sigmoid(conv2d(flow, g.w, g.b)));
  return masks;
}

template <typename T>
std::vector<Var<T>> apply_masks(Tape<T>& tape, Var<T> x,
                                const std::vector<Var<T>>& masks,
                                const MultiKernelSpec& spec) {
  require(int(masks.size()) == spec.attended_count(),
          "apply_masks: " + std::to_string(masks.size()) + " masks for " +
              std::to_string(spec.attended_count()) + " attended branches");
  for (const Var<T>& m : masks)
    require(m.shape() == x.shape(), "apply_masks: mask " + m.shape().str() +
                                        " does not match input " +
                                        x.shape().str());
  std::vector<Var<T>> inputs;
  std::size_t mi = 0;
  for (const Branch& b : spec.branches)
    inputs.push_back(b.attended ? hadamard(x, masks[mi++]) : x);
  return inputs;
}

template <typename T>
std::vector<std::vector<double>> mask_region_statistics(
    const std::vector<Tensor<T>>& masks, const std::vector<std::uint8_t>& labels,
    int label_h, int label_w, int patch, int num_regions,
    std::vector<std::vector<std::int64_t>>* counts) {
  require(patch >= 1, "mask_region_statistics: patch must be >= 1");
  std::vector<std::vector<double>> sums(masks.size(),
                                        std::vector<double>(num_regions, 0.0));
  std::vector<std::vector<std::int64_t>> cnts(
      masks.size(), std::vector<std::int64_t>(num_regions, 0));
  const int p2 = patch * patch;
  for (std::size_t b = 0; b < masks.size(); ++b) {
    const Tensor<T>& m = masks[b];
    require(m.shape.h * patch == label_h && m.shape.w * patch == label_w,
            "mask_region_statistics: mask " + m.shape.str() +
                " does not map onto labels under patch " + std::to_string(patch));
    require(m.shape.c % p2 == 0,
            "mask_region_statistics: mask channels not a multiple of patch^2");
    require(std::size_t(m.shape.n) * label_h * label_w == labels.size(),
            "mask_region_statistics: label map size mismatch");
    for (int n = 0; n < m.shape.n; ++n)
      for (int i = 0; i < m.shape.h; ++i)
        for (int j = 0; j < m.shape.w; ++j)
          for (int c = 0; c < m.shape.c; ++c) {
            const int within = c % p2;
            const int py = i * patch + within / patch;
            const int px = j * patch + within % patch;
            const std::uint8_t r =
                labels[(std::size_t(n) * label_h + py) * label_w + px];
            if (r >= num_regions) continue;
            sums[b][r] += double(m.at(n, i, j, c));
            cnts[b][r] += 1;
          }
  }
  for (std::size_t b = 0; b < masks.size(); ++b)
    for (int r = 0; r < num_regions; ++r)
      sums[b][r] = cnts[b][r] > 0 ? sums[b][r] / double(cnts[b][r]) : 0.0;
  if (counts != nullptr) *counts = std::move(cnts);
  return sums;
}

#define MKLSTM_ATTN_DEF(T)                                                        \
  template std::vector<MaskGenParams<T>> make_mask_generators<T>(                 \
      const MultiKernelSpec&, int, int, std::uint64_t);                           \
  template std::vector<NamedTensorRef<T>> mask_gen_param_refs<T>(                 \
      std::vector<MaskGenParams<T>>&, const std::string&);                        \
  template std::vector<MaskGenVars<T>> bind_mask_generators<T>(                   \
      Tape<T>&, std::vector<MaskGenParams<T>>&, bool, const std::string&);        \
  template std::vector<Var<T>> generate_masks<T>(                                 \
      Tape<T>&, const std::vector<MaskGenVars<T>>&, Var<T>,                       \
      const MultiKernelSpec&);                                                    \
  template std::vector<Var<T>> apply_masks<T>(Tape<T>&, Var<T>,                   \
                                              const std::vector<Var<T>>&,         \
                                              const MultiKernelSpec&);            \
  template std::vector<std::vector<double>> mask_region_statistics<T>(            \
      const std::vector<Tensor<T>>&, const std::vector<std::uint8_t>&, int, int,  \
      int, int, std::vector<std::vector<std::int64_t>>*);
MKLSTM_ATTN_DEF(float)
MKLSTM_ATTN_DEF(double)
#undef MKLSTM_ATTN_DEF

}  // namespace mklstm
