#include "lipscde/tape.hpp"

#include <cmath>

#include "lipscde/errors.hpp"

namespace lipscde {

namespace {

constexpr double kLogitClip = 30.0;

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

void require(bool ok, const char* what) {
  if (!ok) throw ContractViolation(what);
}

// out += g (x) y
void add_outer(Tensor& out, std::span<const double> g, std::span<const double> y) {
  std::size_t c = y.size();
  for (std::size_t i = 0; i < g.size(); ++i) {
    double gi = g[i];
    if (gi == 0.0) continue;
    double* row = out.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) row[j] += gi * y[j];
  }
}

// out += M^T g
void add_matvec_t(std::span<double> out, const Tensor& m, std::span<const double> g) {
  std::size_t r = m.rows(), c = m.cols();
  for (std::size_t i = 0; i < r; ++i) {
    double gi = g[i];
    if (gi == 0.0) continue;
    const double* row = m.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) out[j] += gi * row[j];
  }
}

void matvec_into(std::span<double> out, const Tensor& m, std::span<const double> x) {
  std::size_t r = m.rows(), c = m.cols();
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = m.data() + i * c;
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += row[j] * x[j];
    out[i] = s;
  }
}

// reusable backward scratch (a tape is single-threaded)
thread_local std::vector<double> scratch_a, scratch_b, scratch_c, scratch_d,
    scratch_e, scratch_f;

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kConst: return "const";
    case Op::kParamLeaf: return "param";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kNeg: return "neg";
    case Op::kScale: return "scale";
    case Op::kMatVec: return "matvec";
    case Op::kMatMul: return "matmul";
    case Op::kTanh: return "tanh";
    case Op::kSigmoid: return "sigmoid";
    case Op::kSquare: return "square";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kDot: return "dot";
    case Op::kOuter: return "outer";
    case Op::kRow: return "row";
    case Op::kConcat: return "concat";
    case Op::kConv1d: return "conv1d_same";
    case Op::kSkewShift: return "skew_shift";
    case Op::kAffine: return "affine";
    case Op::kAffineTanh: return "affine_tanh";
    case Op::kMatVecTanh: return "matvec_tanh";
    case Op::kBceLogits: return "bce_logits";
    case Op::kMeanMany: return "mean_many";
    case Op::kLipCell: return "lip_cell";
    case Op::kGruCell: return "gru_cell";
    case Op::kControlContract: return "control_contract";
    case Op::kEulerStep: return "euler_step";
    case Op::kEulerStepNoise: return "euler_step_noise";
    case Op::kConvTap: return "conv_tap";
    case Op::kAffineScalar: return "affine_scalar";
    case Op::kWeightedSqErrMean: return "weighted_sq_err_mean";
    case Op::kEmbedStep: return "embed_step";
  }
  return "?";
}

Tape::Node& Tape::fresh(Op op) {
  if (count_ == nodes_.size()) nodes_.emplace_back();
  Node& n = nodes_[count_];
  ++count_;
  n.op = op;
  n.npar = 0;
  n.has_grad = false;
  n.i0 = 0;
  n.c0 = 0.0;
  n.bound = nullptr;
  n.caux.clear();
  n.vpar.clear();
  return n;
}

void Tape::check_finite_value(const Node& n) const {
  if (!n.value.all_finite()) throw NumericalError(op_name(n.op));
}

Var Tape::constant(Tensor v) {
  Node& n = fresh(Op::kConst);
  n.value = std::move(v);
  return last();
}

Var Tape::param(Param& p) {
  Node& n = fresh(Op::kParamLeaf);
  n.value = p.value;
  n.bound = &p;
  return last();
}

Var Tape::add(Var a, Var b) {
  Node& n = fresh(Op::kAdd);
  const Tensor &va = value(a), &vb = value(b);
  require(va.same_shape(vb), "add: shape mismatch");
  n.par = {a.id, b.id};
  n.npar = 2;
  n.value.resize_like(va);
  for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = va[i] + vb[i];
  check_finite_value(n);
  return last();
}

Var Tape::sub(Var a, Var b) {
  Node& n = fresh(Op::kSub);
  const Tensor &va = value(a), &vb = value(b);
  require(va.same_shape(vb), "sub: shape mismatch");
  n.par = {a.id, b.id};
  n.npar = 2;
  n.value.resize_like(va);
  for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = va[i] - vb[i];
  check_finite_value(n);
  return last();
}

Var Tape::mul(Var a, Var b) {
  Node& n = fresh(Op::kMul);
  const Tensor &va = value(a), &vb = value(b);
  require(va.same_shape(vb), "mul: shape mismatch");
  n.par = {a.id, b.id};
  n.npar = 2;
  n.value.resize_like(va);
  for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = va[i] * vb[i];
  check_finite_value(n);
  return last();
}

Var Tape::neg(Var a) {
  Node& n = fresh(Op::kNeg);
  const Tensor& va = value(a);
  n.par = {a.id};
  n.npar = 1;
  n.value.resize_like(va);
  for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = -va[i];
  return last();
}

Var Tape::scale(Var a, double c) {
  Node& n = fresh(Op::kScale);
  const Tensor& va = value(a);
  n.par = {a.id};
  n.npar = 1;
  n.c0 = c;
  n.value.resize_like(va);
  for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = c * va[i];
  check_finite_value(n);
  return last();
}

Var Tape::matvec(Var m, Var x) {
  Node& n = fresh(Op::kMatVec);
  const Tensor &vm = value(m), &vx = value(x);
  require(vm.rank() == 2 && vx.rank() == 1 && vm.cols() == vx.size(),
          "matvec: shape mismatch");
  n.par = {m.id, x.id};
  n.npar = 2;
  n.value.resize_vec(vm.rows());
  matvec_into(n.value.values(), vm, vx.values());
  check_finite_value(n);
  return last();
}

Var Tape::matmul(Var a, Var b) {
  Node& n = fresh(Op::kMatMul);
  const Tensor &va = value(a), &vb = value(b);
  require(va.rank() == 2 && vb.rank() == 2 && va.cols() == vb.rows(),
          "matmul: shape mismatch");
  std::size_t r = va.rows(), k = va.cols(), c = vb.cols();
  n.par = {a.id, b.id};
  n.npar = 2;
  n.value.resize_mat(r, c);
  n.value.fill(0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double av = va(i, p);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < c; ++j) n.value(i, j) += av * vb(p, j);
    }
  check_finite_value(n);
  return last();
}

Var Tape::tanh(Var a) {
  Node& n = fresh(Op::kTanh);
  const Tensor& va = value(a);
  n.par = {a.id};
  n.npar = 1;
  n.value.resize_like(va);
  for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = std::tanh(va[i]);
  return last();
}

Var Tape::sigmoid(Var a) {
  Node& n = fresh(Op::kSigmoid);
  const Tensor& va = value(a);
  n.par = {a.id};
  n.npar = 1;
  n.value.resize_like(va);
  for (std::size_t i = 0; i < va.size(); ++i)
    n.value[i] = 1.0 / (1.0 + std::exp(-va[i]));
  return last();
}

Var Tape::square(Var a) {
  Node& n = fresh(Op::kSquare);
  const Tensor& va = value(a);
  n.par = {a.id};
  n.npar = 1;
  n.value.resize_like(va);
  for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = va[i] * va[i];
  check_finite_value(n);
  return last();
}

Var Tape::sum(Var a) {
  Node& n = fresh(Op::kSum);
  const Tensor& va = value(a);
  n.par = {a.id};
  n.npar = 1;
  double s = 0.0;
  for (double v : va.values()) s += v;
  n.value.resize_vec(1);
  n.value[0] = s;
  check_finite_value(n);
  return last();
}

Var Tape::mean(Var a) {
  Node& n = fresh(Op::kMean);
  const Tensor& va = value(a);
  require(va.size() > 0, "mean: empty input");
  n.par = {a.id};
  n.npar = 1;
  double s = 0.0;
  for (double v : va.values()) s += v;
  n.value.resize_vec(1);
  n.value[0] = s / double(va.size());
  check_finite_value(n);
  return last();
}

Var Tape::dot(Var a, Var b) {
  Node& n = fresh(Op::kDot);
  const Tensor &va = value(a), &vb = value(b);
  require(va.size() == vb.size(), "dot: size mismatch");
  n.par = {a.id, b.id};
  n.npar = 2;
  n.value.resize_vec(1);
  n.value[0] = lipscde::dot(va.values(), vb.values());
  check_finite_value(n);
  return last();
}

Var Tape::outer(Var u, Var v) {
  Node& n = fresh(Op::kOuter);
  const Tensor &vu = value(u), &vv = value(v);
  require(vu.rank() == 1 && vv.rank() == 1, "outer: vectors required");
  n.par = {u.id, v.id};
  n.npar = 2;
  n.value.resize_mat(vu.size(), vv.size());
  for (std::size_t i = 0; i < vu.size(); ++i)
    for (std::size_t j = 0; j < vv.size(); ++j) n.value(i, j) = vu[i] * vv[j];
  check_finite_value(n);
  return last();
}

Var Tape::row(Var m, std::size_t i) {
  Node& n = fresh(Op::kRow);
  const Tensor& vm = value(m);
  require(vm.rank() == 2 && i < vm.rows(), "row: index out of range");
  n.par = {m.id};
  n.npar = 1;
  n.i0 = int32_t(i);
  n.value.resize_vec(vm.cols());
  for (std::size_t j = 0; j < vm.cols(); ++j) n.value[j] = vm(i, j);
  return last();
}

Var Tape::concat(std::span<const Var> parts) {
  require(!parts.empty(), "concat: empty");
  Node& n = fresh(Op::kConcat);
  std::size_t total = 0;
  for (Var p : parts) total += value(p).size();
  n.value.resize_vec(total);
  n.vpar.reserve(parts.size());
  std::size_t off = 0;
  for (Var p : parts) {
    n.vpar.push_back(p.id);
    for (double v : value(p).values()) n.value[off++] = v;
  }
  return last();
}

Var Tape::conv1d_same(Var signal, Var kernel) {
  Node& n = fresh(Op::kConv1d);
  const Tensor &x = value(signal), &k = value(kernel);
  require(x.rank() == 2, "conv1d_same: signal must be [T x c]");
  require(k.rank() == 3, "conv1d_same: kernel must be [out][in][tap]");
  require(k.dim(1) == x.cols(), "conv1d_same: channel mismatch");
  std::size_t T = x.rows(), ci = x.cols(), co = k.dim(0), kw = k.dim(2);
  std::size_t p = (kw - 1) / 2;
  n.par = {signal.id, kernel.id};
  n.npar = 2;
  n.value.resize_mat(T, co);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t o = 0; o < co; ++o) {
      double s = 0.0;
      for (std::size_t q = 0; q < kw; ++q) {
        std::ptrdiff_t src = std::ptrdiff_t(t + q) - std::ptrdiff_t(p);
        if (src < 0 || src >= std::ptrdiff_t(T)) continue;
        for (std::size_t c = 0; c < ci; ++c)
          s += k(o, c, q) * x(std::size_t(src), c);
      }
      n.value(t, o) = s;
    }
  check_finite_value(n);
  return last();
}

Var Tape::skew_shift(Var m, double delta) {
  Node& n = fresh(Op::kSkewShift);
  const Tensor& vm = value(m);
  require(vm.rank() == 2 && vm.rows() == vm.cols(), "skew_shift: square matrix");
  n.par = {m.id};
  n.npar = 1;
  n.c0 = delta;
  std::size_t d = vm.rows();
  n.value.resize_mat(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      n.value(i, j) = vm(i, j) - vm(j, i) - (i == j ? delta : 0.0);
  return last();
}

Var Tape::affine(Var w, Var x, Var b) {
  Node& n = fresh(Op::kAffine);
  const Tensor &vw = value(w), &vx = value(x), &vb = value(b);
  require(vw.rank() == 2 && vw.cols() == vx.size() && vw.rows() == vb.size(),
          "affine: shape mismatch");
  n.par = {w.id, x.id, b.id};
  n.npar = 3;
  n.value.resize_vec(vw.rows());
  matvec_into(n.value.values(), vw, vx.values());
  for (std::size_t i = 0; i < vb.size(); ++i) n.value[i] += vb[i];
  check_finite_value(n);
  return last();
}

Var Tape::affine_tanh(Var w, Var x, Var b) {
  Node& n = fresh(Op::kAffineTanh);
  const Tensor &vw = value(w), &vx = value(x), &vb = value(b);
  require(vw.rank() == 2 && vw.cols() == vx.size() && vw.rows() == vb.size(),
          "affine_tanh: shape mismatch");
  n.par = {w.id, x.id, b.id};
  n.npar = 3;
  n.value.resize_vec(vw.rows());
  matvec_into(n.value.values(), vw, vx.values());
  for (std::size_t i = 0; i < vb.size(); ++i)
    n.value[i] = std::tanh(n.value[i] + vb[i]);
  return last();
}

Var Tape::matvec_tanh(Var w, Var x) {
  Node& n = fresh(Op::kMatVecTanh);
  const Tensor &vw = value(w), &vx = value(x);
  require(vw.rank() == 2 && vw.cols() == vx.size(), "matvec_tanh: shape mismatch");
  n.par = {w.id, x.id};
  n.npar = 2;
  n.value.resize_vec(vw.rows());
  matvec_into(n.value.values(), vw, vx.values());
  for (double& v : n.value.values()) v = std::tanh(v);
  return last();
}

Var Tape::bce_logits(Var logits, const Tensor& targets) {
  Node& n = fresh(Op::kBceLogits);
  const Tensor& vl = value(logits);
  require(vl.size() == targets.size(), "bce_logits: size mismatch");
  for (double t : targets.values())
    require(t == 0.0 || t == 1.0, "bce_logits: targets must be binary");
  n.par = {logits.id};
  n.npar = 1;
  n.caux.assign(targets.values().begin(), targets.values().end());
  double s = 0.0;
  for (std::size_t i = 0; i < vl.size(); ++i) {
    double l = std::clamp(vl[i], -kLogitClip, kLogitClip);
    s += softplus(l) - n.caux[i] * l;
  }
  n.value.resize_vec(1);
  n.value[0] = s / double(vl.size());
  check_finite_value(n);
  return last();
}

Var Tape::mean_many(std::span<const Var> scalars) {
  require(!scalars.empty(), "mean_many: empty");
  Node& n = fresh(Op::kMeanMany);
  n.vpar.reserve(scalars.size());
  double s = 0.0;
  for (Var v : scalars) {
    n.vpar.push_back(v.id);
    s += value(v).scalar_value();
  }
  n.value.resize_vec(1);
  n.value[0] = s / double(scalars.size());
  check_finite_value(n);
  return last();
}

Var Tape::lip_cell(Var m, Var w, Var u_mat, Var b, Var state, Var embed,
                   double delta) {
  Node& n = fresh(Op::kLipCell);
  const Tensor &vm = value(m), &vw = value(w), &vu = value(u_mat);
  const Tensor &vb = value(b), &vs = value(state), &ve = value(embed);
  std::size_t l = vs.size();
  require(vm.rank() == 2 && vm.rows() == l && vm.cols() == l, "lip_cell: M shape");
  require(vw.rows() == l && vw.cols() == l && vu.rows() == l && vu.cols() == ve.size(),
          "lip_cell: W/U shape");
  require(vb.size() == l, "lip_cell: bias shape");
  n.par = {m.id, w.id, u_mat.id, b.id, state.id, embed.id};
  n.npar = 6;
  n.c0 = delta;
  n.aux.resize_vec(l);  // tanh output
  n.value.resize_vec(l);
  for (std::size_t i = 0; i < l; ++i) {
    double pre = vb[i];
    const double* wrow = vw.data() + i * l;
    for (std::size_t j = 0; j < l; ++j) pre += wrow[j] * vs[j];
    const double* urow = vu.data() + i * ve.size();
    for (std::size_t j = 0; j < ve.size(); ++j) pre += urow[j] * ve[j];
    double t = std::tanh(pre);
    n.aux[i] = t;
    double lin = -delta * vs[i];
    for (std::size_t j = 0; j < l; ++j) lin += (vm(i, j) - vm(j, i)) * vs[j];
    n.value[i] = lin + t;
  }
  check_finite_value(n);
  return last();
}

Var Tape::gru_cell(std::span<const Var, 9> weights, Var h, Var x,
                   std::span<const double> const_tail) {
  Node& n = fresh(Op::kGruCell);
  const Tensor& vh = value(h);
  const Tensor& vx = value(x);
  std::size_t l = vh.size();
  std::size_t nin = vx.size() + const_tail.size();
  const Tensor& wz = value(weights[0]);
  require(wz.rows() == l && wz.cols() == nin, "gru_cell: Wz shape");
  for (int i = 0; i < 9; ++i) n.par[std::size_t(i)] = weights[std::size_t(i)].id;
  n.par[9] = h.id;
  n.par[10] = x.id;
  n.npar = 11;
  n.caux.assign(const_tail.begin(), const_tail.end());

  std::vector<double>& in = scratch_a;
  in.resize(nin);
  for (std::size_t i = 0; i < vx.size(); ++i) in[i] = vx[i];
  for (std::size_t i = 0; i < const_tail.size(); ++i) in[vx.size() + i] = const_tail[i];

  const Tensor &uz = value(weights[1]), &bz = value(weights[2]);
  const Tensor &wr = value(weights[3]), &ur = value(weights[4]), &br = value(weights[5]);
  const Tensor &wh = value(weights[6]), &uh = value(weights[7]), &bh = value(weights[8]);

  n.aux.resize_mat(3, l);  // rows: z, r, c
  n.value.resize_vec(l);
  std::vector<double>& rh = scratch_b;
  rh.resize(l);
  for (std::size_t i = 0; i < l; ++i) {
    double az = bz[i], ar = br[i];
    const double* wzr = wz.data() + i * nin;
    const double* wrr = wr.data() + i * nin;
    for (std::size_t j = 0; j < nin; ++j) {
      az += wzr[j] * in[j];
      ar += wrr[j] * in[j];
    }
    const double* uzr = uz.data() + i * l;
    const double* urr = ur.data() + i * l;
    for (std::size_t j = 0; j < l; ++j) {
      az += uzr[j] * vh[j];
      ar += urr[j] * vh[j];
    }
    n.aux(0, i) = 1.0 / (1.0 + std::exp(-az));
    n.aux(1, i) = 1.0 / (1.0 + std::exp(-ar));
  }
  for (std::size_t i = 0; i < l; ++i) rh[i] = n.aux(1, i) * vh[i];
  for (std::size_t i = 0; i < l; ++i) {
    double ac = bh[i];
    const double* whr = wh.data() + i * nin;
    for (std::size_t j = 0; j < nin; ++j) ac += whr[j] * in[j];
    const double* uhr = uh.data() + i * l;
    for (std::size_t j = 0; j < l; ++j) ac += uhr[j] * rh[j];
    double c = std::tanh(ac);
    n.aux(2, i) = c;
    n.value[i] = (1.0 - n.aux(0, i)) * vh[i] + n.aux(0, i) * c;
  }
  check_finite_value(n);
  return last();
}

Var Tape::control_contract(Var wc, Var z0, Var z1, std::span<const double> dhist) {
  Node& n = fresh(Op::kControlContract);
  const Tensor &vw = value(wc), &v0 = value(z0), &v1 = value(z1);
  require(vw.size() == dhist.size() + v0.size() && v0.size() == v1.size(),
          "control_contract: size mismatch");
  n.par = {wc.id, z0.id, z1.id};
  n.npar = 3;
  n.caux.assign(dhist.begin(), dhist.end());
  double s = 0.0;
  for (std::size_t i = 0; i < dhist.size(); ++i) s += vw[i] * dhist[i];
  for (std::size_t i = 0; i < v0.size(); ++i)
    s += vw[dhist.size() + i] * (v1[i] - v0[i]);
  n.value.resize_vec(1);
  n.value[0] = s;
  check_finite_value(n);
  return last();
}

Var Tape::euler_step(Var u, Var v, Var s) {
  Node& n = fresh(Op::kEulerStep);
  const Tensor &vu = value(u), &vv = value(v);
  require(vu.size() == vv.size(), "euler_step: size mismatch");
  double sv = value(s).scalar_value();
  n.par = {u.id, v.id, s.id};
  n.npar = 3;
  n.value.resize_like(vu);
  for (std::size_t i = 0; i < vu.size(); ++i) n.value[i] = vu[i] + vv[i] * sv;
  check_finite_value(n);
  return last();
}

Var Tape::euler_step_noise(Var u, Var v, Var s, Var vg, Var sg,
                           double diffusion_scale) {
  Node& n = fresh(Op::kEulerStepNoise);
  const Tensor &vu = value(u), &vv = value(v), &vvg = value(vg);
  require(vu.size() == vv.size() && vu.size() == vvg.size(),
          "euler_step_noise: size mismatch");
  double sv = value(s).scalar_value();
  double sgv = value(sg).scalar_value();
  n.par = {u.id, v.id, s.id, vg.id, sg.id};
  n.npar = 5;
  n.c0 = diffusion_scale;
  n.value.resize_like(vu);
  for (std::size_t i = 0; i < vu.size(); ++i)
    n.value[i] = vu[i] + vv[i] * sv + diffusion_scale * vvg[i] * sgv;
  check_finite_value(n);
  return last();
}

Var Tape::conv_tap(Var kernel, std::span<const double> window_rows) {
  Node& n = fresh(Op::kConvTap);
  const Tensor& k = value(kernel);
  require(k.rank() == 3, "conv_tap: kernel must be [out][in][tap]");
  std::size_t co = k.dim(0), ci = k.dim(1), kw = k.dim(2);
  require(window_rows.size() == ci * kw, "conv_tap: window size mismatch");
  n.par = {kernel.id};
  n.npar = 1;
  n.caux.assign(window_rows.begin(), window_rows.end());
  n.value.resize_vec(co);
  for (std::size_t o = 0; o < co; ++o) {
    double s = 0.0;
    for (std::size_t q = 0; q < kw; ++q)
      for (std::size_t c = 0; c < ci; ++c) s += k(o, c, q) * n.caux[q * ci + c];
    n.value[o] = s;
  }
  check_finite_value(n);
  return last();
}

Var Tape::affine_scalar(Var w, Var b, Var h) {
  Node& n = fresh(Op::kAffineScalar);
  const Tensor &vw = value(w), &vb = value(b), &vh = value(h);
  require(vw.size() == vh.size() && vb.size() == 1, "affine_scalar: shape");
  n.par = {w.id, b.id, h.id};
  n.npar = 3;
  n.value.resize_vec(1);
  n.value[0] = lipscde::dot(vw.values(), vh.values()) + vb[0];
  check_finite_value(n);
  return last();
}

Var Tape::weighted_sq_err_mean(std::span<const Var> preds,
                               std::span<const double> targets,
                               std::span<const double> weights) {
  require(!preds.empty(), "weighted_sq_err_mean: empty");
  require(preds.size() == targets.size() && preds.size() == weights.size(),
          "weighted_sq_err_mean: length mismatch");
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  require(wsum > 0.0, "weighted_sq_err_mean: all-zero weights");
  Node& n = fresh(Op::kWeightedSqErrMean);
  n.vpar.reserve(preds.size());
  n.caux.assign(targets.begin(), targets.end());
  n.caux.insert(n.caux.end(), weights.begin(), weights.end());
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    n.vpar.push_back(preds[i].id);
    double d = value(preds[i]).scalar_value() - targets[i];
    s += weights[i] * d * d;
  }
  n.c0 = wsum;
  n.value.resize_vec(1);
  n.value[0] = s / wsum;
  check_finite_value(n);
  return last();
}

Var Tape::embed_step(Var w, Var b, Var z, std::span<const double> hist_row) {
  Node& n = fresh(Op::kEmbedStep);
  const Tensor &vw = value(w), &vb = value(b), &vz = value(z);
  std::size_t nin = hist_row.size() + vz.size();
  require(vw.rank() == 2 && vw.cols() == nin && vw.rows() == vb.size(),
          "embed_step: shape mismatch");
  n.par = {w.id, b.id, z.id};
  n.npar = 3;
  n.caux.assign(hist_row.begin(), hist_row.end());
  n.value.resize_vec(vw.rows());
  for (std::size_t i = 0; i < vw.rows(); ++i) {
    double s = vb[i];
    const double* row = vw.data() + i * nin;
    for (std::size_t j = 0; j < hist_row.size(); ++j) s += row[j] * hist_row[j];
    for (std::size_t j = 0; j < vz.size(); ++j)
      s += row[hist_row.size() + j] * vz[j];
    n.value[i] = std::tanh(s);
  }
  return last();
}

Tensor& Tape::grad_of(int32_t id) {
  Node& n = nodes_[std::size_t(id)];
  if (!n.has_grad) {
    n.grad.zero_like_inplace(n.value);
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var root) {
  if (!root.valid() || root.tape != this || std::size_t(root.id) >= count_)
    throw ContractViolation("backward: root not on this tape");
  const Node& rn = nodes_[std::size_t(root.id)];
  if (rn.value.size() != 1)
    throw ContractViolation("backward: root must be scalar");
  if (!rn.value.all_finite()) throw NumericalError(op_name(rn.op));
  grad_of(root.id)[0] += 1.0;
  for (std::size_t idx = std::size_t(root.id) + 1; idx-- > 0;) {
    Node& n = nodes_[idx];
    if (!n.has_grad) continue;
    if (!n.grad.all_finite()) throw NumericalError(op_name(n.op));
    backward_node(idx);
  }
}

void Tape::backward_node(std::size_t idx) {
  Node& n = nodes_[idx];
  const Tensor& g = n.grad;
  auto val = [&](int slot) -> const Tensor& {
    return nodes_[std::size_t(n.par[std::size_t(slot)])].value;
  };
  auto gr = [&](int slot) -> Tensor& { return grad_of(n.par[std::size_t(slot)]); };

  switch (n.op) {
    case Op::kConst:
      break;
    case Op::kParamLeaf: {
      Tensor& pg = n.bound->grad;
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
      break;
    }
    case Op::kAdd: {
      axpy(1.0, g.values(), gr(0).values());
      axpy(1.0, g.values(), gr(1).values());
      break;
    }
    case Op::kSub: {
      axpy(1.0, g.values(), gr(0).values());
      axpy(-1.0, g.values(), gr(1).values());
      break;
    }
    case Op::kMul: {
      const Tensor &a = val(0), &b = val(1);
      Tensor &ga = gr(0), &gb = gr(1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * b[i];
        gb[i] += g[i] * a[i];
      }
      break;
    }
    case Op::kNeg:
      axpy(-1.0, g.values(), gr(0).values());
      break;
    case Op::kScale:
      axpy(n.c0, g.values(), gr(0).values());
      break;
    case Op::kMatVec: {
      const Tensor &m = val(0), &x = val(1);
      add_outer(gr(0), g.values(), x.values());
      add_matvec_t(gr(1).values(), m, g.values());
      break;
    }
    case Op::kMatMul: {
      const Tensor &a = val(0), &b = val(1);
      Tensor &ga = gr(0), &gb = gr(1);
      std::size_t r = a.rows(), k = a.cols(), c = b.cols();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < c; ++j) s += g(i, j) * b(p, j);
          ga(i, p) += s;
        }
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < c; ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < r; ++i) s += a(i, p) * g(i, j);
          gb(p, j) += s;
        }
      break;
    }
    case Op::kTanh: {
      Tensor& ga = gr(0);
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
      break;
    }
    case Op::kSigmoid: {
      Tensor& ga = gr(0);
      for (std::size_t i = 0; i < g.size(); ++i)
        ga[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
      break;
    }
    case Op::kSquare: {
      const Tensor& a = val(0);
      Tensor& ga = gr(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * g[i] * a[i];
      break;
    }
    case Op::kSum: {
      Tensor& ga = gr(0);
      double gv = g[0];
      for (double& v : ga.values()) v += gv;
      break;
    }
    case Op::kMean: {
      Tensor& ga = gr(0);
      double gv = g[0] / double(ga.size());
      for (double& v : ga.values()) v += gv;
      break;
    }
    case Op::kDot: {
      const Tensor &a = val(0), &b = val(1);
      axpy(g[0], b.values(), gr(0).values());
      axpy(g[0], a.values(), gr(1).values());
      break;
    }
    case Op::kOuter: {
      const Tensor &u = val(0), &v = val(1);
      Tensor &gu = gr(0), &gv = gr(1);
      for (std::size_t i = 0; i < u.size(); ++i)
        for (std::size_t j = 0; j < v.size(); ++j) {
          gu[i] += g(i, j) * v[j];
          gv[j] += g(i, j) * u[i];
        }
      break;
    }
    case Op::kRow: {
      Tensor& gm = gr(0);
      std::size_t c = gm.cols();
      for (std::size_t j = 0; j < c; ++j) gm(std::size_t(n.i0), j) += g[j];
      break;
    }
    case Op::kConcat: {
      std::size_t off = 0;
      for (int32_t pid : n.vpar) {
        std::size_t sz = nodes_[std::size_t(pid)].value.size();
        Tensor& pg = grad_of(pid);
        for (std::size_t i = 0; i < sz; ++i) pg[i] += g[off + i];
        off += sz;
      }
      break;
    }
    case Op::kConv1d: {
      const Tensor &x = val(0), &k = val(1);
      Tensor &gx = gr(0), &gk = gr(1);
      std::size_t T = x.rows(), ci = x.cols(), co = k.dim(0), kw = k.dim(2);
      std::size_t p = (kw - 1) / 2;
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t o = 0; o < co; ++o) {
          double gv = g(t, o);
          if (gv == 0.0) continue;
          for (std::size_t q = 0; q < kw; ++q) {
            std::ptrdiff_t src = std::ptrdiff_t(t + q) - std::ptrdiff_t(p);
            if (src < 0 || src >= std::ptrdiff_t(T)) continue;
            for (std::size_t c = 0; c < ci; ++c) {
              gk(o, c, q) += gv * x(std::size_t(src), c);
              gx(std::size_t(src), c) += gv * k(o, c, q);
            }
          }
        }
      break;
    }
    case Op::kSkewShift: {
      Tensor& gm = gr(0);
      std::size_t d = gm.rows();
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) gm(i, j) += g(i, j) - g(j, i);
      break;
    }
    case Op::kAffine: {
      const Tensor &w = val(0), &x = val(1);
      add_outer(gr(0), g.values(), x.values());
      add_matvec_t(gr(1).values(), w, g.values());
      axpy(1.0, g.values(), gr(2).values());
      break;
    }
    case Op::kAffineTanh: {
      const Tensor &w = val(0), &x = val(1);
      std::vector<double>& u = scratch_a;
      u.resize(g.size());
      for (std::size_t i = 0; i < g.size(); ++i)
        u[i] = g[i] * (1.0 - n.value[i] * n.value[i]);
      add_outer(gr(0), u, x.values());
      add_matvec_t(gr(1).values(), w, u);
      axpy(1.0, u, gr(2).values());
      break;
    }
    case Op::kMatVecTanh: {
      const Tensor &w = val(0), &x = val(1);
      std::vector<double>& u = scratch_a;
      u.resize(g.size());
      for (std::size_t i = 0; i < g.size(); ++i)
        u[i] = g[i] * (1.0 - n.value[i] * n.value[i]);
      add_outer(gr(0), u, x.values());
      add_matvec_t(gr(1).values(), w, u);
      break;
    }
    case Op::kBceLogits: {
      const Tensor& l = val(0);
      Tensor& gl = gr(0);
      double gv = g[0] / double(l.size());
      for (std::size_t i = 0; i < l.size(); ++i) {
        double c = std::clamp(l[i], -kLogitClip, kLogitClip);
        double s = 1.0 / (1.0 + std::exp(-c));
        gl[i] += gv * (s - n.caux[i]);
      }
      break;
    }
    case Op::kMeanMany: {
      double gv = g[0] / double(n.vpar.size());
      for (int32_t pid : n.vpar) grad_of(pid)[0] += gv;
      break;
    }
    case Op::kLipCell: {
      const Tensor& m = val(0);
      const Tensor& w = val(1);
      const Tensor& u_mat = val(2);
      const Tensor& st = val(4);
      const Tensor& e = val(5);
      std::size_t l = st.size(), le = e.size();
      std::vector<double>& h = scratch_a;
      h.resize(l);
      for (std::size_t i = 0; i < l; ++i)
        h[i] = g[i] * (1.0 - n.aux[i] * n.aux[i]);
      {
        Tensor &gm = gr(0), &gst = gr(4);
        // linear part: value_lin = (M - M^T - delta I) state
        for (std::size_t i = 0; i < l; ++i) {
          double gi = g[i];
          for (std::size_t j = 0; j < l; ++j) {
            gm(i, j) += gi * st[j] - g[j] * st[i];
            gst[j] += gi * (m(i, j) - m(j, i));
          }
          gst[i] -= n.c0 * gi;
        }
        // tanh part
        add_outer(gr(1), h, st.values());
        add_matvec_t(gst.values(), w, h);
      }
      Tensor &gu = gr(2), &gb = gr(3), &ge = gr(5);
      for (std::size_t i = 0; i < l; ++i) {
        gb[i] += h[i];
        const double* urow = u_mat.data() + i * le;
        for (std::size_t j = 0; j < le; ++j) ge[j] += h[i] * urow[j];
        for (std::size_t j = 0; j < le; ++j) gu(i, j) += h[i] * e[j];
      }
      break;
    }
    case Op::kGruCell: {
      const Tensor &wz = val(0), &uz = val(1);
      const Tensor &wr = val(3), &ur = val(4);
      const Tensor &wh = val(6), &uh = val(7);
      const Tensor &h = val(9), &x = val(10);
      std::size_t l = h.size();
      std::size_t nx = x.size();
      std::size_t nin = nx + n.caux.size();
      std::vector<double>& in = scratch_a;
      in.resize(nin);
      for (std::size_t i = 0; i < nx; ++i) in[i] = x[i];
      for (std::size_t i = 0; i < n.caux.size(); ++i) in[nx + i] = n.caux[i];

      std::vector<double>& dz = scratch_b;
      std::vector<double>& dr = scratch_c;
      std::vector<double>& dc = scratch_d;
      std::vector<double>& dh = scratch_e;
      std::vector<double>& da = scratch_f;
      dz.resize(l);
      dr.assign(l, 0.0);
      dc.resize(l);
      dh.resize(l);
      da.assign(nin, 0.0);
      static thread_local std::vector<double> rh_buf, s_buf;
      rh_buf.resize(l);
      s_buf.assign(l, 0.0);
      for (std::size_t i = 0; i < l; ++i) {
        double z = n.aux(0, i), r = n.aux(1, i), c = n.aux(2, i);
        rh_buf[i] = r * h[i];
        dz[i] = g[i] * (c - h[i]) * z * (1.0 - z);  // pre-activation
        dc[i] = g[i] * z * (1.0 - c * c);           // pre-activation
        dh[i] = g[i] * (1.0 - z);
      }
      // candidate path, then split Uh^T dc into r and h contributions
      add_outer(gr(6), dc, in);
      add_outer(gr(7), dc, rh_buf);
      axpy(1.0, dc, gr(8).values());
      add_matvec_t(s_buf, uh, dc);
      for (std::size_t i = 0; i < l; ++i) {
        double r = n.aux(1, i);
        dr[i] = s_buf[i] * h[i] * r * (1.0 - r);
        dh[i] += s_buf[i] * r;
      }
      add_matvec_t(da, wh, dc);
      // update gate
      add_outer(gr(0), dz, in);
      add_outer(gr(1), dz, h.values());
      axpy(1.0, dz, gr(2).values());
      add_matvec_t(dh, uz, dz);
      add_matvec_t(da, wz, dz);
      // reset gate
      add_outer(gr(3), dr, in);
      add_outer(gr(4), dr, h.values());
      axpy(1.0, dr, gr(5).values());
      add_matvec_t(dh, ur, dr);
      add_matvec_t(da, wr, dr);

      axpy(1.0, dh, gr(9).values());
      Tensor& gx = gr(10);
      for (std::size_t i = 0; i < nx; ++i) gx[i] += da[i];
      break;
    }
    case Op::kControlContract: {
      const Tensor &wcv = val(0), &z0 = val(1), &z1 = val(2);
      Tensor &gwc = gr(0), &gz0 = gr(1), &gz1 = gr(2);
      double gv = g[0];
      std::size_t nh = n.caux.size(), nz = z0.size();
      for (std::size_t i = 0; i < nh; ++i) gwc[i] += gv * n.caux[i];
      for (std::size_t i = 0; i < nz; ++i) {
        gwc[nh + i] += gv * (z1[i] - z0[i]);
        gz1[i] += gv * wcv[nh + i];
        gz0[i] -= gv * wcv[nh + i];
      }
      break;
    }
    case Op::kEulerStep: {
      const Tensor& v = val(1);
      double sv = val(2)[0];
      axpy(1.0, g.values(), gr(0).values());
      axpy(sv, g.values(), gr(1).values());
      gr(2)[0] += lipscde::dot(g.values(), v.values());
      break;
    }
    case Op::kEulerStepNoise: {
      const Tensor &v = val(1), &vg = val(3);
      double sv = val(2)[0], sgv = val(4)[0];
      axpy(1.0, g.values(), gr(0).values());
      axpy(sv, g.values(), gr(1).values());
      gr(2)[0] += lipscde::dot(g.values(), v.values());
      axpy(n.c0 * sgv, g.values(), gr(3).values());
      gr(4)[0] += n.c0 * lipscde::dot(g.values(), vg.values());
      break;
    }
    case Op::kConvTap: {
      const Tensor& k = val(0);
      Tensor& gk = gr(0);
      std::size_t co = k.dim(0), ci = k.dim(1), kw = k.dim(2);
      for (std::size_t o = 0; o < co; ++o) {
        double gv = g[o];
        if (gv == 0.0) continue;
        for (std::size_t q = 0; q < kw; ++q)
          for (std::size_t c = 0; c < ci; ++c)
            gk(o, c, q) += gv * n.caux[q * ci + c];
      }
      break;
    }
    case Op::kAffineScalar: {
      const Tensor &w = val(0), &h = val(2);
      double gv = g[0];
      axpy(gv, h.values(), gr(0).values());
      gr(1)[0] += gv;
      axpy(gv, w.values(), gr(2).values());
      break;
    }
    case Op::kWeightedSqErrMean: {
      std::size_t k = n.vpar.size();
      double gv = g[0];
      for (std::size_t i = 0; i < k; ++i) {
        double pv = nodes_[std::size_t(n.vpar[i])].value[0];
        double d = pv - n.caux[i];
        grad_of(n.vpar[i])[0] += gv * 2.0 * n.caux[k + i] * d / n.c0;
      }
      break;
    }
    case Op::kEmbedStep: {
      const Tensor& w = val(0);
      const Tensor& z = val(2);
      Tensor &gw = gr(0), &gb = gr(1), &gz = gr(2);
      std::size_t nh = n.caux.size(), nz = z.size(), nin = nh + nz;
      std::vector<double>& u = scratch_a;
      u.resize(g.size());
      for (std::size_t i = 0; i < g.size(); ++i)
        u[i] = g[i] * (1.0 - n.value[i] * n.value[i]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        double ui = u[i];
        gb[i] += ui;
        double* grow = gw.data() + i * nin;
        const double* wrow = w.data() + i * nin;
        for (std::size_t j = 0; j < nh; ++j) grow[j] += ui * n.caux[j];
        for (std::size_t j = 0; j < nz; ++j) {
          grow[nh + j] += ui * z[j];
          gz[j] += ui * wrow[nh + j];
        }
      }
      break;
    }
  }
}

}  // namespace lipscde
