#include "mklstm/cells.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mklstm {
namespace {

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument(msg);
}

void require(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

void validate_spec(const MultiKernelSpec& spec) {
  require(!spec.branches.empty(), "cell spec: no branches");
  for (const Branch& b : spec.branches) {
    require(b.kernel >= 1 && b.kernel % 2 == 1,
            "cell spec: kernel size must be odd, got " + std::to_string(b.kernel));
    require(b.channels >= 1, "cell spec: branch channels must be >= 1");
    require(b.bottleneck >= 0, "cell spec: negative bottleneck");
  }
  if (spec.fusion == Fusion::one_by_one)
    require(spec.out_channels >= 1,
            "cell spec: one_by_one fusion requires out_channels");
}

}  // namespace

int MultiKernelSpec::sum_branch_channels() const {
  int s = 0;
  for (const Branch& b : branches) s += b.channels;
  return s;
}

int MultiKernelSpec::hidden_channels() const {
  return fusion == Fusion::one_by_one ? out_channels : sum_branch_channels();
}

int MultiKernelSpec::attended_count() const {
  int n = 0;
  for (const Branch& b : branches) n += b.attended ? 1 : 0;
  return n;
}

std::string MultiKernelSpec::label() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < branches.size(); ++i) {
    if (i) os << "+";
    os << branches[i].kernel << "x" << branches[i].kernel;
  }
  os << "x" << hidden_channels();
  if (fusion == Fusion::one_by_one) os << "-1x1";
  return os.str();
}

MultiKernelSpec MultiKernelSpec::single(int kernel, int channels) {
  MultiKernelSpec spec;
  spec.branches.push_back(Branch{kernel, channels, 0, false});
  spec.fusion = Fusion::interleave;
  return spec;
}

ParamCount count_parameters(const MultiKernelSpec& spec, int c_in) {
  validate_spec(spec);
  ParamCount out;
  for (const Branch& b : spec.branches) {
    const std::int64_t cin_eff = b.bottleneck > 0 ? b.bottleneck : c_in;
    if (b.bottleneck > 0) out.weights += std::int64_t(c_in) * b.bottleneck;
    out.weights += 4LL * b.kernel * b.kernel * cin_eff * b.channels;
  }
  if (spec.fusion == Fusion::one_by_one)
    out.weights += 4LL * spec.sum_branch_channels() * spec.out_channels;
  out.biases = 4LL * spec.hidden_channels();
  return out;
}

ParamCount count_parameters_full(const MultiKernelSpec& spec, int c_in,
                                 Peephole peephole, int state_h, int state_w) {
  ParamCount out = count_parameters(spec, c_in);
  const int c = spec.hidden_channels();
  for (const Branch& b : spec.branches)
    out.weights += 4LL * b.kernel * b.kernel * c * b.channels;
  if (peephole == Peephole::per_channel) {
    out.weights += 3LL * c;
  } else if (peephole == Peephole::full_state) {
    require(state_h > 0 && state_w > 0,
            "count_parameters_full: full-state peepholes need state dims");
    out.weights += 3LL * state_h * state_w * c;
  }
  return out;
}

template <typename T>
void glorot_uniform(Tensor<T>& t, std::int64_t fan_in, std::int64_t fan_out,
                    Rng& rng) {
  const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
  fill_uniform(t, rng, -limit, limit);
}

template <typename T>
CellParams<T> make_cell(const MultiKernelSpec& spec, int in_channels,
                        Peephole peephole, std::uint64_t seed, int state_h,
                        int state_w) {
  validate_spec(spec);
  require(in_channels >= 1, "make_cell: in_channels must be >= 1");
  CellParams<T> cell;
  cell.spec = spec;
  cell.in_channels = in_channels;
  cell.peephole = peephole;
  const int c = spec.hidden_channels();
  for (const Branch& b : spec.branches) {
    BranchParams<T> bp;
    const int cin_eff = b.bottleneck > 0 ? b.bottleneck : in_channels;
    bp.w_x = Tensor<T>(b.kernel, b.kernel, cin_eff, 4 * b.channels);
    bp.w_h = Tensor<T>(b.kernel, b.kernel, c, 4 * b.channels);
    if (b.bottleneck > 0) bp.w_bneck = Tensor<T>(1, 1, in_channels, b.bottleneck);
    cell.branches.push_back(std::move(bp));
  }
  if (spec.fusion == Fusion::one_by_one)
    cell.w_fuse = Tensor<T>(1, 1, spec.sum_branch_channels(), 4 * spec.out_channels);
  cell.bias = Tensor<T>(1, 1, 1, 4 * c);
  if (peephole == Peephole::per_channel) {
    cell.w_ci = Tensor<T>(1, 1, 1, c);
    cell.w_cf = Tensor<T>(1, 1, 1, c);
    cell.w_co = Tensor<T>(1, 1, 1, c);
  } else if (peephole == Peephole::full_state) {
    require(state_h > 0 && state_w > 0,
            "make_cell: full-state peepholes need state dims");
    cell.w_ci = Tensor<T>(1, state_h, state_w, c);
    cell.w_cf = Tensor<T>(1, state_h, state_w, c);
    cell.w_co = Tensor<T>(1, state_h, state_w, c);
  }
  init_weights(cell, seed);
  return cell;
}

template <typename T>
void init_weights(CellParams<T>& cell, std::uint64_t seed) {
  Rng rng(seed);
  const int c = cell.spec.hidden_channels();
  for (std::size_t i = 0; i < cell.branches.size(); ++i) {
    const Branch& b = cell.spec.branches[i];
    BranchParams<T>& bp = cell.branches[i];
    const std::int64_t k2 = std::int64_t(b.kernel) * b.kernel;
    const int cin_eff = b.bottleneck > 0 ? b.bottleneck : cell.in_channels;
    glorot_uniform(bp.w_x, k2 * cin_eff, k2 * b.channels, rng);
    glorot_uniform(bp.w_h, k2 * c, k2 * b.channels, rng);
    if (!bp.w_bneck.empty())
      glorot_uniform(bp.w_bneck, cell.in_channels, b.bottleneck, rng);
  }
  if (!cell.w_fuse.empty())
    glorot_uniform(cell.w_fuse, cell.spec.sum_branch_channels(),
                   cell.spec.out_channels, rng);
  cell.bias.fill(T(0));
  for (int i = c; i < 2 * c; ++i) cell.bias.data[i] = T(1);  // forget gate
  if (!cell.w_ci.empty()) {
    cell.w_ci.fill(T(0));
    cell.w_cf.fill(T(0));
    cell.w_co.fill(T(0));
  }
}

template <typename T>
std::vector<NamedTensorRef<T>> cell_param_refs(CellParams<T>& cell,
                                               const std::string& prefix) {
  std::vector<NamedTensorRef<T>> out;
  for (std::size_t i = 0; i < cell.branches.size(); ++i) {
    const std::string bp = prefix + ".b" + std::to_string(i);
    out.emplace_back(bp + ".w_x", &cell.branches[i].w_x);
    out.emplace_back(bp + ".w_h", &cell.branches[i].w_h);
    if (!cell.branches[i].w_bneck.empty())
      out.emplace_back(bp + ".w_bneck", &cell.branches[i].w_bneck);
  }
  if (!cell.w_fuse.empty()) out.emplace_back(prefix + ".w_fuse", &cell.w_fuse);
  out.emplace_back(prefix + ".bias", &cell.bias);
  if (!cell.w_ci.empty()) {
    out.emplace_back(prefix + ".w_ci", &cell.w_ci);
    out.emplace_back(prefix + ".w_cf", &cell.w_cf);
    out.emplace_back(prefix + ".w_co", &cell.w_co);
  }
  return out;
}

template <typename T>
CellVars<T> bind_cell(Tape<T>& tape, CellParams<T>& cell, bool requires_grad,
                      const std::string& prefix) {
  std::map<const Tensor<T>*, Var<T>> bound;
  for (auto& [name, tensor] : cell_param_refs(cell, prefix))
    bound[tensor] = tape.leaf(*tensor, requires_grad, name);

  CellVars<T> vars;
  vars.params = &cell;
  for (BranchParams<T>& bp : cell.branches) {
    BranchVars<T> bv;
    bv.w_x = bound.at(&bp.w_x);
    bv.w_h = bound.at(&bp.w_h);
    if (!bp.w_bneck.empty()) bv.w_bneck = bound.at(&bp.w_bneck);
    vars.branches.push_back(bv);
  }
  if (!cell.w_fuse.empty()) vars.w_fuse = bound.at(&cell.w_fuse);
  vars.bias = bound.at(&cell.bias);
  if (!cell.w_ci.empty()) {
    vars.w_ci = bound.at(&cell.w_ci);
    vars.w_cf = bound.at(&cell.w_cf);
    vars.w_co = bound.at(&cell.w_co);
  }
  return vars;
}

template <typename T>
void cell_leaves(const CellVars<T>& vars, std::vector<Var<T>>& out) {
  for (const BranchVars<T>& b : vars.branches) {
    out.push_back(b.w_x);
    out.push_back(b.w_h);
    if (b.w_bneck.valid()) out.push_back(b.w_bneck);
  }
  if (vars.w_fuse.valid()) out.push_back(vars.w_fuse);
  out.push_back(vars.bias);
  if (vars.w_ci.valid()) {
    out.push_back(vars.w_ci);
    out.push_back(vars.w_cf);
    out.push_back(vars.w_co);
  }
}

template <typename T>
StateVars<T> zero_state(Tape<T>& tape, int batch, int height, int width,
                        int channels) {
  StateVars<T> s;
  s.c = tape.leaf(Tensor<T>(batch, height, width, channels));
  s.h = tape.leaf(Tensor<T>(batch, height, width, channels));
  return s;
}

namespace {

// Shared gate logic: bias and peepholes applied to the fused pre-activation,
// then the state update. Output-gate peephole reads c_{t-1}.
template <typename T>
StateVars<T> gates_to_state(Tape<T>& tape, const CellVars<T>& cell,
                            Var<T> preact, StateVars<T> prev,
                            GateTrace<T>* trace) {
  const int c = cell.params->spec.hidden_channels();
  require(preact.shape().c == 4 * c,
          "cell step: pre-activation has " + std::to_string(preact.shape().c) +
              " channels, expected " + std::to_string(4 * c));
  auto parts = split_channels(preact, {c, c, c, c});
  auto bias = split_channels(cell.bias, {c, c, c, c});
  Var<T> pi = add(parts[0], bias[0]);
  Var<T> pf = add(parts[1], bias[1]);
  Var<T> po = add(parts[2], bias[2]);
  Var<T> pg = add(parts[3], bias[3]);
  if (cell.w_ci.valid()) {
    pi = add(pi, hadamard(prev.c, cell.w_ci));
    pf = add(pf, hadamard(prev.c, cell.w_cf));
    po = add(po, hadamard(prev.c, cell.w_co));
  }
  Var<T> gi = sigmoid(pi);
  Var<T> gf = sigmoid(pf);
  Var<T> go = sigmoid(po);
  Var<T> gg = tanh(pg);
  StateVars<T> next;
  next.c = add(hadamard(gf, prev.c), hadamard(gi, gg));
  next.h = hadamard(go, tanh(next.c));
  if (trace != nullptr) {
    trace->input_gate.push_back(gi);
    trace->forget_gate.push_back(gf);
    trace->output_gate.push_back(go);
    trace->cell_act.push_back(gg);
  }
  return next;
}

template <typename T>
void check_state(Var<T> x, StateVars<T> prev, const char* op) {
  const Shape xs = x.shape(), cs = prev.c.shape(), hs = prev.h.shape();
  require(cs == hs, std::string(op) + ": state tensors differ: c " + cs.str() +
                        " vs h " + hs.str());
  require(xs.n == cs.n && xs.h == cs.h && xs.w == cs.w,
          std::string(op) + ": input " + xs.str() + " does not match state " +
              cs.str());
}

}  // namespace

template <typename T>
StateVars<T> fclstm_step(Tape<T>& tape, const CellVars<T>& cell, Var<T> x,
                         StateVars<T> prev) {
  require(cell.params->spec.branches.size() == 1,
          "fclstm_step: expects a single fully connected branch");
  require(cell.params->spec.branches[0].kernel == 1,
          "fclstm_step: weights must be 1x1 (fully connected)");
  require(x.shape().h == 1 && x.shape().w == 1,
          "fclstm_step: input spatial dims must be 1x1, got " + x.shape().str());
  check_state(x, prev, "fclstm_step");
  Var<T> px = dense(x, cell.branches[0].w_x);
  Var<T> ph = dense(prev.h, cell.branches[0].w_h);
  return gates_to_state(tape, cell, add(px, ph), prev,
                        static_cast<GateTrace<T>*>(nullptr));
}

template <typename T>
StateVars<T> convlstm_step(Tape<T>& tape, const CellVars<T>& cell, Var<T> x,
                           StateVars<T> prev, GateTrace<T>* trace) {
  require(cell.params->spec.branches.size() == 1,
          "convlstm_step: expects a single-kernel cell");
  check_state(x, prev, "convlstm_step");
  Var<T> px = conv2d(x, cell.branches[0].w_x);
  Var<T> ph = conv2d(prev.h, cell.branches[0].w_h);
  return gates_to_state(tape, cell, add(px, ph), prev, trace);
}

template <typename T>
Var<T> multikernel_preactivation(Tape<T>& tape, const CellVars<T>& cell,
                                 Var<T> x, Var<T> h_prev,
                                 const std::vector<Var<T>>* masks) {
  const MultiKernelSpec& spec = cell.params->spec;
  const std::size_t n_branches = spec.branches.size();
  const bool has_input = x.valid();  // invalid x stands for an all-zero frame
  if (has_input && masks != nullptr)
    require(int(masks->size()) == spec.attended_count(),
            "multikernel: got " + std::to_string(masks->size()) +
                " masks for " + std::to_string(spec.attended_count()) +
                " attended branches");
  else if (has_input)
    require(spec.attended_count() == 0,
            "multikernel: attended branches need masks");

  // Per-branch 4*C_k pre-activations, split into the four gate groups.
  std::vector<std::vector<Var<T>>> gate_slices(n_branches);
  std::size_t mask_idx = 0;
  for (std::size_t i = 0; i < n_branches; ++i) {
    const Branch& b = spec.branches[i];
    Var<T> ph = conv2d(h_prev, cell.branches[i].w_h);
    Var<T> pre = ph;
    if (has_input) {
      Var<T> xin = x;
      if (b.attended && masks != nullptr) xin = hadamard(xin, (*masks)[mask_idx++]);
      if (b.bottleneck > 0) xin = conv2d(xin, cell.branches[i].w_bneck);
      Var<T> px = conv2d(xin, cell.branches[i].w_x);
      pre = add(px, ph);
    }
    const int ck = b.channels;
    gate_slices[i] = split_channels(pre, {ck, ck, ck, ck});
  }

  // Gate blocks: gate g takes branch-1..branch-B channels, in branch order.
  std::vector<Var<T>> blocks(4);
  for (int g = 0; g < 4; ++g) {
    if (n_branches == 1) {
      blocks[g] = gate_slices[0][g];
    } else {
      std::vector<Var<T>> parts;
      parts.reserve(n_branches);
      for (std::size_t i = 0; i < n_branches; ++i) parts.push_back(gate_slices[i][g]);
      blocks[g] = concat_channels(parts);
    }
  }

  if (spec.fusion == Fusion::interleave) {
    require(spec.hidden_channels() == spec.sum_branch_channels(),
            "multikernel: interleave fusion requires sum of branch channels to "
            "equal hidden channels");
    return concat_channels(blocks);
  }

  // one_by_one: per-gate 1x1 convolution onto out_channels.
  const int out_c = spec.out_channels;
  auto fuse_slices = split_channels(cell.w_fuse, {out_c, out_c, out_c, out_c});
  std::vector<Var<T>> fused(4);
  for (int g = 0; g < 4; ++g) {
    Var<T> in_g = spec.fusion_tanh ? tanh(blocks[g]) : blocks[g];
    fused[g] = conv2d(in_g, fuse_slices[g]);
  }
  return concat_channels(fused);
}

template <typename T>
StateVars<T> multikernel_step(Tape<T>& tape, const CellVars<T>& cell, Var<T> x,
                              StateVars<T> prev,
                              const std::vector<Var<T>>* masks,
                              GateTrace<T>* trace) {
  if (x.valid()) check_state(x, prev, "multikernel_step");
  Var<T> preact = multikernel_preactivation(tape, cell, x, prev.h, masks);
  return gates_to_state(tape, cell, preact, prev, trace);
}

#define MKLSTM_CELLS_DEF(T)                                                       \
  template struct CellParams<T>;                                                  \
  template CellParams<T> make_cell<T>(const MultiKernelSpec&, int, Peephole,      \
                                      std::uint64_t, int, int);                   \
  template void init_weights<T>(CellParams<T>&, std::uint64_t);                   \
  template void glorot_uniform<T>(Tensor<T>&, std::int64_t, std::int64_t, Rng&);  \
  template std::vector<NamedTensorRef<T>> cell_param_refs<T>(CellParams<T>&,      \
                                                             const std::string&); \
  template CellVars<T> bind_cell<T>(Tape<T>&, CellParams<T>&, bool,               \
                                    const std::string&);                          \
  template void cell_leaves<T>(const CellVars<T>&, std::vector<Var<T>>&);         \
  template StateVars<T> zero_state<T>(Tape<T>&, int, int, int, int);              \
  template StateVars<T> fclstm_step<T>(Tape<T>&, const CellVars<T>&, Var<T>,      \
                                       StateVars<T>);                             \
  template StateVars<T> convlstm_step<T>(Tape<T>&, const CellVars<T>&, Var<T>,    \
                                         StateVars<T>, GateTrace<T>*);            \
  template Var<T> multikernel_preactivation<T>(Tape<T>&, const CellVars<T>&,      \
                                               Var<T>, Var<T>,                    \
                                               const std::vector<Var<T>>*);       \
  template StateVars<T> multikernel_step<T>(Tape<T>&, const CellVars<T>&,         \
                                            Var<T>, StateVars<T>,                 \
                                            const std::vector<Var<T>>*,           \
                                            GateTrace<T>*);
MKLSTM_CELLS_DEF(float)
MKLSTM_CELLS_DEF(double)
#undef MKLSTM_CELLS_DEF

}  // namespace mklstm
