#include "mklstm/train.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mklstm/io.hpp"

namespace mklstm {
namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

void require(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

template <typename T>
constexpr std::uint8_t dtype_tag() {
  return sizeof(T) == 4 ? 0 : 1;  // 0 = f32, 1 = f64
}

constexpr char kCheckpointMagic[5] = {'M', 'K', 'C', 'K', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_tensor_table(io::ByteWriter& out,
                        const std::vector<std::pair<std::string, const Tensor<T>*>>& table) {
  out.u32_le(std::uint32_t(table.size()));
  for (const auto& [name, tensor] : table) {
    out.u32_le(std::uint32_t(name.size()));
    out.bytes(name);
    out.u8(dtype_tag<T>());
    out.u32_le(std::uint32_t(tensor->shape.n));
    out.u32_le(std::uint32_t(tensor->shape.h));
    out.u32_le(std::uint32_t(tensor->shape.w));
    out.u32_le(std::uint32_t(tensor->shape.c));
    out.write(tensor->data.data(), tensor->data.size() * sizeof(T));
  }
}

template <typename T>
void read_tensor_table(io::ByteReader& in,
                       const std::vector<std::pair<std::string, Tensor<T>*>>& table) {
  const std::uint32_t count = in.u32_le("tensor count");
  require(count == table.size(),
          in.path() + ": tensor table has " + std::to_string(count) +
              " entries, expected " + std::to_string(table.size()));
  for (const auto& [name, tensor] : table) {
    const std::uint32_t name_len = in.u32_le("tensor name length");
    const std::string got = in.bytes(name_len, "tensor name");
    require(got == name, in.path() + ": tensor '" + got + "', expected '" +
                             name + "' (registry order is fixed)");
    const std::uint8_t dtype = in.u8("dtype");
    require(dtype == dtype_tag<T>(),
            in.path() + ": tensor '" + name + "' has dtype tag " +
                std::to_string(dtype) + ", expected " +
                std::to_string(dtype_tag<T>()));
    Shape s;
    s.n = int(in.u32_le("shape.n"));
    s.h = int(in.u32_le("shape.h"));
    s.w = int(in.u32_le("shape.w"));
    s.c = int(in.u32_le("shape.c"));
    require(s == tensor->shape, in.path() + ": tensor '" + name + "' has shape " +
                                    s.str() + ", expected " +
                                    tensor->shape.str());
    in.read_exact(tensor->data.data(), tensor->data.size() * sizeof(T),
                  name.c_str());
  }
}

}  // namespace

template <typename T>
AdamState<T> init_adam(const std::vector<NamedTensorRef<T>>& params) {
  AdamState<T> state;
  for (const auto& [name, tensor] : params) {
    state.m.emplace_back(tensor->shape);
    state.v.emplace_back(tensor->shape);
  }
  return state;
}

template <typename T>
void adam_step(const std::vector<NamedTensorRef<T>>& params,
               const std::vector<Tensor<T>>& grads, AdamState<T>& state,
               const AdamConfig& config) {
  require(grads.size() == params.size() && state.m.size() == params.size(),
          "adam_step: registry/gradient/state size mismatch");
  state.step += 1;
  const double b1 = config.beta1, b2 = config.beta2;
  const double bc1 = 1.0 - std::pow(b1, double(state.step));
  const double bc2 = 1.0 - std::pow(b2, double(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<T>& theta = *params[p].second;
    const Tensor<T>& g = grads[p];
    require(g.shape == theta.shape, "adam_step: gradient shape " +
                                        g.shape.str() + " vs parameter " +
                                        theta.shape.str() + " for " +
                                        params[p].first);
    Tensor<T>& m = state.m[p];
    Tensor<T>& v = state.v[p];
    for (std::size_t i = 0; i < theta.data.size(); ++i) {
      const double gi = double(g.data[i]);
      if (!std::isfinite(gi))
        fail("adam_step: non-finite gradient in tensor '" + params[p].first +
             "' at element " + std::to_string(i));
      const double mi = b1 * double(m.data[i]) + (1.0 - b1) * gi;
      const double vi = b2 * double(v.data[i]) + (1.0 - b2) * gi * gi;
      m.data[i] = T(mi);
      v.data[i] = T(vi);
      theta.data[i] =
          T(double(theta.data[i]) -
            config.lr * (mi / bc1) / (std::sqrt(vi / bc2) + config.eps));
    }
  }
}

template <typename T>
double clip_gradients(std::vector<Tensor<T>>& grads, double max_norm) {
  double sq = 0;
  for (const Tensor<T>& g : grads)
    for (const T& v : g.data) sq += double(v) * double(v);
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const T s = T(max_norm / norm);
    for (Tensor<T>& g : grads)
      for (T& v : g.data) v *= s;
  }
  return norm;
}

template <typename T>
void save_checkpoint(const std::string& path,
                     const std::vector<NamedTensorRef<T>>& params,
                     const AdamState<T>& adam, const std::string& config_text,
                     std::uint64_t seed, std::int64_t epoch) {
  io::ByteWriter out(path);
  out.write(kCheckpointMagic, 5);
  out.u32_le(kCheckpointVersion);
  out.u32_le(std::uint32_t(config_text.size()));
  out.bytes(config_text);
  out.u64_le(seed);
  out.u64_le(std::uint64_t(epoch));
  std::vector<std::pair<std::string, const Tensor<T>*>> table;
  for (const auto& [name, tensor] : params) table.emplace_back(name, tensor);
  write_tensor_table(out, table);
  // optimizer state: step count + first/second moments per parameter
  out.u64_le(std::uint64_t(adam.step));
  table.clear();
  for (std::size_t i = 0; i < params.size(); ++i) {
    table.emplace_back(params[i].first + ".m", &adam.m[i]);
    table.emplace_back(params[i].first + ".v", &adam.v[i]);
  }
  write_tensor_table(out, table);
  out.close();
}

template <typename T>
CheckpointInfo<T> load_checkpoint(const std::string& path,
                                  const std::vector<NamedTensorRef<T>>& params,
                                  AdamState<T>* adam) {
  io::ByteReader in(path);
  char magic[5];
  in.read_exact(magic, 5, "magic");
  require(std::memcmp(magic, kCheckpointMagic, 5) == 0,
          path + ": bad checkpoint magic at byte offset 0");
  const std::uint32_t version = in.u32_le("version");
  require(version == kCheckpointVersion,
          path + ": unsupported checkpoint version " + std::to_string(version));
  CheckpointInfo<T> info;
  const std::uint32_t cfg_len = in.u32_le("config length");
  info.config_text = in.bytes(cfg_len, "config text");
  info.seed = in.u64_le("seed");
  info.epoch = std::int64_t(in.u64_le("epoch"));
  std::vector<std::pair<std::string, Tensor<T>*>> table;
  for (const auto& [name, tensor] : params) table.emplace_back(name, tensor);
  read_tensor_table(in, table);
  if (adam != nullptr) {
    adam->step = std::int64_t(in.u64_le("optimizer step"));
    require(adam->m.size() == params.size() && adam->v.size() == params.size(),
            "load_checkpoint: optimizer state not initialized to registry size");
    table.clear();
    for (std::size_t i = 0; i < params.size(); ++i) {
      table.emplace_back(params[i].first + ".m", &adam->m[i]);
      table.emplace_back(params[i].first + ".v", &adam->v[i]);
    }
    read_tensor_table(in, table);
  }
  return info;
}

template <typename T>
SeqBatch<T> make_batch(const SeqDataset<T>& data, const std::vector<int>& idx,
                       int t_in, int t_out, bool with_flow) {
  require(!idx.empty(), "make_batch: empty index list");
  const Shape fs = data.frames[std::size_t(idx[0])].shape;
  require(fs.n >= t_in + t_out, "make_batch: sample has " +
                                    std::to_string(fs.n) + " frames, need " +
                                    std::to_string(t_in + t_out));
  const int n = int(idx.size());
  SeqBatch<T> batch;
  for (int t = 0; t < t_in; ++t)
    batch.inputs.emplace_back(n, fs.h, fs.w, fs.c);
  for (int t = 0; t < t_out; ++t)
    batch.targets.emplace_back(n, fs.h, fs.w, fs.c);
  const std::int64_t frame_elems = std::int64_t(fs.h) * fs.w * fs.c;
  for (int b = 0; b < n; ++b) {
    const Tensor<T>& sample = data.frames[std::size_t(idx[std::size_t(b)])];
    for (int t = 0; t < t_in; ++t)
      std::memcpy(&batch.inputs[t].data[std::size_t(b) * frame_elems],
                  &sample.data[std::size_t(t) * frame_elems],
                  sizeof(T) * frame_elems);
    for (int t = 0; t < t_out; ++t)
      std::memcpy(&batch.targets[t].data[std::size_t(b) * frame_elems],
                  &sample.data[std::size_t(t_in + t) * frame_elems],
                  sizeof(T) * frame_elems);
  }
  if (with_flow) {
    require(data.flows.size() == data.frames.size(),
            "make_batch: dataset has no flow tensors");
    const Shape ls = data.flows[std::size_t(idx[0])].shape;
    const std::int64_t flow_elems = std::int64_t(ls.h) * ls.w * ls.c;
    for (int t = 0; t < t_in; ++t)
      batch.flows.emplace_back(n, ls.h, ls.w, ls.c);
    for (int b = 0; b < n; ++b) {
      const Tensor<T>& sample = data.flows[std::size_t(idx[std::size_t(b)])];
      for (int t = 0; t < t_in; ++t)
        std::memcpy(&batch.flows[t].data[std::size_t(b) * flow_elems],
                    &sample.data[std::size_t(t) * flow_elems],
                    sizeof(T) * flow_elems);
    }
  }
  return batch;
}

template <typename T>
double evaluate(PredictorParams<T>& model, const SeqDataset<T>& data, int batch) {
  require(data.size() > 0, "evaluate: empty dataset");
  const PredictorConfig& cfg = model.config;
  double total = 0;
  for (std::size_t start = 0; start < data.size(); start += std::size_t(batch)) {
    std::vector<int> idx;
    for (std::size_t i = start; i < std::min(start + std::size_t(batch), data.size()); ++i)
      idx.push_back(int(i));
    SeqBatch<T> b = make_batch(data, idx, cfg.t_in, cfg.t_out, cfg.attention());
    Tape<T> tape;
    PredictorVars<T> vars = bind_predictor(tape, model, false);
    ForwardResult<T> r = forward(tape, vars, cfg, b);
    // loss is already divided by the (variable) batch size
    total += r.loss_value() * double(idx.size());
  }
  return total / double(data.size());
}

template <typename T>
FitResult<T> fit(PredictorParams<T>& model, const SeqDataset<T>& train_data,
                 const SeqDataset<T>& test_data, const FitConfig& config) {
  require(train_data.size() > 0, "fit: empty training dataset");
  require(config.batch >= 1, "fit: batch size must be >= 1");
  io::make_dirs(config.run_dir);
  const PredictorConfig& mcfg = model.config;
  const std::vector<NamedTensorRef<T>> refs = predictor_param_refs(model);
  AdamState<T> adam = init_adam(refs);
  const double per_pixel_div = double(prediction_elements(mcfg));

  int start_epoch = 0;
  const std::string latest = config.run_dir + "/ckpt_latest.mkck";
  const std::string csv_path = config.run_dir + "/metrics.csv";
  if (config.resume && io::file_exists(latest)) {
    CheckpointInfo<T> info = load_checkpoint(latest, refs, &adam);
    start_epoch = int(info.epoch) + 1;
  } else {
    save_checkpoint(latest, refs, adam, config.config_text, config.seed, -1);
    std::ofstream csv(csv_path, std::ios::trunc);
    csv << "run_id,epoch,split,sce_sum,sce_per_pixel,wall_seconds\n";
  }

  FitResult<T> result;
  if (start_epoch >= config.epochs && test_data.size() > 0)
    result.final_test_sce = evaluate(model, test_data, config.batch);
  for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    // seed-derived shuffle, a pure function of (seed, epoch)
    std::vector<int> perm(train_data.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = int(i);
    Rng rng(Rng::derive(config.seed, 0x5u + std::uint64_t(epoch)));
    for (std::size_t i = perm.size(); i > 1; --i)
      std::swap(perm[i - 1], perm[std::size_t(rng.next_below(i))]);

    double train_total = 0;
    std::size_t seen = 0;
    while (seen < perm.size()) {
      const std::size_t take = std::min(std::size_t(config.batch),
                                        perm.size() - seen);
      std::vector<int> idx(perm.begin() + std::ptrdiff_t(seen),
                           perm.begin() + std::ptrdiff_t(seen + take));
      seen += take;
      SeqBatch<T> batch =
          make_batch(train_data, idx, mcfg.t_in, mcfg.t_out, mcfg.attention());
      Tape<T> tape;
      PredictorVars<T> vars = bind_predictor(tape, model, true);
      ForwardResult<T> r = forward(tape, vars, mcfg, batch);
      tape.backward(r.loss);
      // collect gradients in registry order (zeros when disconnected)
      std::vector<Var<T>> leaves = predictor_leaves(vars);
      require(leaves.size() == refs.size(),
              "fit: bound leaf count does not match the registry");
      std::vector<Tensor<T>> grads;
      grads.reserve(refs.size());
      for (std::size_t i = 0; i < refs.size(); ++i) {
        const Tensor<T>* g = tape.grad_of(leaves[i]);
        grads.push_back(g != nullptr ? *g : Tensor<T>(refs[i].second->shape));
      }
      clip_gradients(grads, config.clip_norm);
      adam_step(refs, grads, adam, config.adam);
      train_total += r.loss_value() * double(take);
    }
    const double train_sce = train_total / double(train_data.size());
    const double test_sce =
        test_data.size() > 0 ? evaluate(model, test_data, config.batch) : 0.0;
    const auto t1 = std::chrono::steady_clock::now();
    const double wall = std::chrono::duration<double>(t1 - t0).count();

    EpochMetrics em;
    em.epoch = epoch;
    em.train_sce = train_sce;
    em.train_per_pixel = train_sce / per_pixel_div;
    em.test_sce = test_sce;
    em.test_per_pixel = test_sce / per_pixel_div;
    result.epochs.push_back(em);
    result.final_test_sce = test_sce;

    std::ofstream csv(csv_path, std::ios::app);
    csv.precision(17);
    csv << config.run_id << "," << epoch << ",train," << em.train_sce << ","
        << em.train_per_pixel << "," << wall << "\n";
    if (test_data.size() > 0)
      csv << config.run_id << "," << epoch << ",test," << em.test_sce << ","
          << em.test_per_pixel << "," << wall << "\n";

    if (config.keep_epoch_checkpoints)
      save_checkpoint(config.run_dir + "/ckpt_epoch" + std::to_string(epoch) +
                          ".mkck",
                      refs, adam, config.config_text, config.seed, epoch);
    save_checkpoint(latest, refs, adam, config.config_text, config.seed, epoch);
  }
  return result;
}

#define MKLSTM_TRAIN_DEF(T)                                                        \
  template AdamState<T> init_adam<T>(const std::vector<NamedTensorRef<T>>&);       \
  template void adam_step<T>(const std::vector<NamedTensorRef<T>>&,                \
                             const std::vector<Tensor<T>>&, AdamState<T>&,         \
                             const AdamConfig&);                                   \
  template double clip_gradients<T>(std::vector<Tensor<T>>&, double);              \
  template void save_checkpoint<T>(const std::string&,                             \
                                   const std::vector<NamedTensorRef<T>>&,          \
                                   const AdamState<T>&, const std::string&,        \
                                   std::uint64_t, std::int64_t);                   \
  template CheckpointInfo<T> load_checkpoint<T>(                                   \
      const std::string&, const std::vector<NamedTensorRef<T>>&, AdamState<T>*);   \
  template SeqBatch<T> make_batch<T>(const SeqDataset<T>&,                         \
                                     const std::vector<int>&, int, int, bool);     \
  template double evaluate<T>(PredictorParams<T>&, const SeqDataset<T>&, int);     \
  template FitResult<T> fit<T>(PredictorParams<T>&, const SeqDataset<T>&,          \
                               const SeqDataset<T>&, const FitConfig&);
MKLSTM_TRAIN_DEF(float)
MKLSTM_TRAIN_DEF(double)
#undef MKLSTM_TRAIN_DEF

}  // namespace mklstm
