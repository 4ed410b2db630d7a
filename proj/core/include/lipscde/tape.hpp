#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lipscde/param.hpp"
#include "lipscde/tensor.hpp"

namespace lipscde {

class Tape;

/// Handle to a node on a Tape. Values are computed eagerly at construction,
/// so `value()` is always available immediately.
struct Var {
  Tape* tape = nullptr;
  int32_t id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
};

enum class Op : uint8_t {
  kConst,
  kParamLeaf,
  kAdd,
  kSub,
  kMul,
  kNeg,
  kScale,
  kMatVec,
  kMatMul,
  kTanh,
  kSigmoid,
  kSquare,
  kSum,
  kMean,
  kDot,
  kOuter,
  kRow,
  kConcat,
  kConv1d,
  kSkewShift,
  kAffine,
  kAffineTanh,
  kMatVecTanh,
  kBceLogits,
  kMeanMany,
  kLipCell,
  kGruCell,
  kControlContract,
  kEulerStep,
  kEulerStepNoise,
  kConvTap,
  kAffineScalar,
  kWeightedSqErrMean,
  kEmbedStep,
};

const char* op_name(Op op);

/// Reverse-mode automatic differentiation over a flat tape. Construction
/// order is the topological order, so backward() is a single reverse sweep.
/// clear() retires nodes without releasing their buffers, so a tape reused
/// across training iterations reaches a steady state with no allocation.
/// Single-threaded per instance; distinct tapes are independent.
class Tape {
 public:
  struct Node {
    Tensor value;
    Tensor grad;                 // sized lazily during backward
    Tensor aux;                  // cached forward intermediates
    std::vector<double> caux;    // constant payload (targets, increments, ...)
    std::vector<int32_t> vpar;   // n-ary parents (kConcat, kMeanMany, ...)
    std::array<int32_t, 12> par{};
    uint8_t npar = 0;
    bool has_grad = false;
    Op op = Op::kConst;
    int32_t i0 = 0;
    double c0 = 0.0;
    Param* bound = nullptr;
  };

  Tape() { nodes_.reserve(1024); }

  // ---- leaves ----
  Var constant(Tensor v);
  Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }
  Var param(Param& p);

  // ---- elementary ops ----
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var neg(Var a);
  Var scale(Var a, double c);
  Var matvec(Var m, Var x);
  Var matmul(Var a, Var b);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var square(Var a);
  Var sum(Var a);
  Var mean(Var a);
  Var dot(Var a, Var b);
  Var outer(Var u, Var v);
  Var row(Var m, std::size_t i);
  Var concat(std::span<const Var> parts);
  Var conv1d_same(Var signal, Var kernel);
  Var skew_shift(Var m, double delta);
  Var affine(Var w, Var x, Var b);
  Var affine_tanh(Var w, Var x, Var b);
  Var matvec_tanh(Var w, Var x);
  Var bce_logits(Var logits, const Tensor& targets);
  Var mean_many(std::span<const Var> scalars);

  // ---- fused ops (hot path of the latent model) ----
  Var lip_cell(Var m, Var w, Var u_mat, Var b, Var state, Var embed, double delta);
  Var gru_cell(std::span<const Var, 9> weights, Var h, Var x,
               std::span<const double> const_tail);
  Var control_contract(Var wc, Var z0, Var z1, std::span<const double> dhist);
  Var euler_step(Var u, Var v, Var s);
  Var euler_step_noise(Var u, Var v, Var s, Var vg, Var sg, double diffusion_scale);
  Var conv_tap(Var kernel, std::span<const double> window_rows);
  Var affine_scalar(Var w, Var b, Var h);
  Var weighted_sq_err_mean(std::span<const Var> preds,
                           std::span<const double> targets,
                           std::span<const double> weights);
  Var embed_step(Var w, Var b, Var z, std::span<const double> hist_row);

  /// Accumulates d(root)/d(param) into every reachable Param's grad.
  /// root must be scalar; throws NumericalError if a NaN/Inf shows up.
  void backward(Var root);

  void clear() { count_ = 0; }
  std::size_t size() const { return count_; }

  const Tensor& value(Var v) const { return nodes_[std::size_t(v.id)].value; }
  const Node& node(Var v) const { return nodes_[std::size_t(v.id)]; }

 private:
  friend struct Var;
  std::vector<Node> nodes_;
  std::size_t count_ = 0;

  // Returns the next slot (reusing retired nodes and their buffers). May
  // grow nodes_, so builders must take parent references only afterwards.
  Node& fresh(Op op);
  Var last() { return Var{this, int32_t(count_ - 1)}; }
  Tensor& grad_of(int32_t id);
  void check_finite_value(const Node& n) const;
  void backward_node(std::size_t idx);
};

inline const Tensor& Var::value() const { return tape->value(*this); }

}  // namespace lipscde
