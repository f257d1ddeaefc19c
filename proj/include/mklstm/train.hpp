#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mklstm/predictor.hpp"
#include "mklstm/tensor.hpp"

namespace mklstm {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m, v;  // aligned with the parameter registry
  std::int64_t step = 0;
};

template <typename T>
AdamState<T> init_adam(const std::vector<NamedTensorRef<T>>& params);

// Standard bias-corrected adaptive-moment update. Aborts on non-finite
// gradients, naming the offending tensor.
template <typename T>
void adam_step(const std::vector<NamedTensorRef<T>>& params,
               const std::vector<Tensor<T>>& grads, AdamState<T>& state,
               const AdamConfig& config);

// Scales all gradients so the global L2 norm is at most max_norm.
// Returns the pre-clip norm.
template <typename T>
double clip_gradients(std::vector<Tensor<T>>& grads, double max_norm);

// ---- checkpoints ("MKCK1") ---------------------------------------------------

template <typename T>
void save_checkpoint(const std::string& path,
                     const std::vector<NamedTensorRef<T>>& params,
                     const AdamState<T>& adam, const std::string& config_text,
                     std::uint64_t seed, std::int64_t epoch);

template <typename T>
struct CheckpointInfo {
  std::string config_text;
  std::uint64_t seed = 0;
  std::int64_t epoch = -1;
};

// Restores parameter and optimizer tensors in place; the tensor table must
// match the registry names and shapes exactly.
template <typename T>
CheckpointInfo<T> load_checkpoint(const std::string& path,
                                  const std::vector<NamedTensorRef<T>>& params,
                                  AdamState<T>* adam);

// ---- fit -----------------------------------------------------------------------

template <typename T>
struct SeqDataset {
  std::vector<Tensor<T>> frames;  // per sample (T,H,W,C), patchified
  std::vector<Tensor<T>> flows;   // per sample (T,H,W,Cf); empty when unused

  std::size_t size() const { return frames.size(); }
};

// Assembles frame-major batches for the given sample indices.
template <typename T>
SeqBatch<T> make_batch(const SeqDataset<T>& data, const std::vector<int>& idx,
                       int t_in, int t_out, bool with_flow);

struct FitConfig {
  int epochs = 20;
  int batch = 8;
  AdamConfig adam;
  double clip_norm = 10.0;
  std::uint64_t seed = 0;
  std::string run_dir;          // metrics.csv + checkpoints live here
  std::string run_id = "run";
  bool resume = false;          // continue from <run_dir>/ckpt_latest.mkck
  bool keep_epoch_checkpoints = true;
  std::string config_text;      // embedded in checkpoints
};

struct EpochMetrics {
  int epoch = 0;
  double train_sce = 0, train_per_pixel = 0;
  double test_sce = 0, test_per_pixel = 0;
};

template <typename T>
struct FitResult {
  std::vector<EpochMetrics> epochs;
  double final_test_sce = 0;
};

// Mean SCE over a dataset (sum over samples / sample count), forward only.
template <typename T>
double evaluate(PredictorParams<T>& model, const SeqDataset<T>& data, int batch);

template <typename T>
FitResult<T> fit(PredictorParams<T>& model, const SeqDataset<T>& train_data,
                 const SeqDataset<T>& test_data, const FitConfig& config);

#define MKLSTM_TRAIN_DECL(T)                                                       \
  extern template AdamState<T> init_adam<T>(                                       \
      const std::vector<NamedTensorRef<T>>&);                                      \
  extern template void adam_step<T>(const std::vector<NamedTensorRef<T>>&,         \
                                    const std::vector<Tensor<T>>&, AdamState<T>&,  \
                                    const AdamConfig&);                            \
  extern template double clip_gradients<T>(std::vector<Tensor<T>>&, double);       \
  extern template void save_checkpoint<T>(                                         \
      const std::string&, const std::vector<NamedTensorRef<T>>&,                   \
      const AdamState<T>&, const std::string&, std::uint64_t, std::int64_t);       \
  extern template CheckpointInfo<T> load_checkpoint<T>(                            \
      const std::string&, const std::vector<NamedTensorRef<T>>&, AdamState<T>*);   \
  extern template SeqBatch<T> make_batch<T>(const SeqDataset<T>&,                  \
                                            const std::vector<int>&, int, int,     \
                                            bool);                                 \
  extern template double evaluate<T>(PredictorParams<T>&, const SeqDataset<T>&,    \
                                     int);                                         \
  extern template FitResult<T> fit<T>(PredictorParams<T>&, const SeqDataset<T>&,   \
                                      const SeqDataset<T>&, const FitConfig&);
MKLSTM_TRAIN_DECL(float)
MKLSTM_TRAIN_DECL(double)
#undef MKLSTM_TRAIN_DECL

}  // namespace mklstm
