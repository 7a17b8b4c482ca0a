#include "flowservo/control_net.hpp"

#include <cmath>
#include <random>

#include "flowservo/error.hpp"

namespace flowservo {

namespace {

using Eigen::Index;
using Eigen::VectorXd;
using MatMap = Eigen::Map<Eigen::MatrixXd>;
using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;

VectorXd sigmoid(const VectorXd& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

}  // namespace

struct ControlNet::Unroll {
  struct Cell {
    VectorXd in, h_prev, c_prev, i, f, g, o, tanh_c;
  };
  struct Step {
    Vec6 x;
    std::vector<Cell> cells;
    VectorXd top;  // last cell's hidden state
    Vec6 squashed;  // tanh(z / bound)
    Vec6 v;
  };
  std::vector<Step> steps;
};

ControlNet::ControlNet(const ControlNetConfig& config)
    : PlanNetwork(config.horizon, config.limits, config.seed), config_(config) {
  if (config.hidden <= 0 || config.layers <= 0 || config.horizon == 0) {
    throw DomainError("control net: hidden width, layer count and horizon must be positive");
  }
  const Index h = config.hidden;
  Index offset = 0;
  auto take = [&offset](Index n) {
    const Index at = offset;
    offset += n;
    return at;
  };
  layout_.w_in = take(h * 6);
  layout_.b_in = take(h);
  for (int l = 0; l < config.layers; ++l) {
    layout_.w_cell.push_back(take(4 * h * 2 * h));
    layout_.b_cell.push_back(take(4 * h));
  }
  layout_.w_out = take(6 * h);
  layout_.b_out = take(6);
  layout_.total = offset;
  init_storage(layout_.total);
  reset();
}

void ControlNet::initialize(Eigen::VectorXd& params, std::uint64_t seed) const {
  const Index h = config_.hidden;
  params = VectorXd::Zero(layout_.total);
  std::mt19937_64 rng(seed);
  auto fill = [&](Index offset, Index n, double fan_in) {
    std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
    for (Index i = 0; i < n; ++i) params[offset + i] = dist(rng);
  };
  fill(layout_.w_in, h * 6, 6.0);
  for (int l = 0; l < config_.layers; ++l) {
    fill(layout_.w_cell[l], 4 * h * 2 * h, static_cast<double>(2 * h));
    // Gate order is input, forget, cell, output.
    params.segment(layout_.b_cell[l] + h, h).setOnes();
  }
  if (!config_.zero_output) fill(layout_.w_out, 6 * h, static_cast<double>(h));
}

void ControlNet::run(const VelocityScrew& previous, Unroll& unroll) const {
  const Index h = config_.hidden;
  const int layers = config_.layers;
  const double* p = params_.data();
  const ConstMatMap w_in(p + layout_.w_in, h, 6);
  const Eigen::Map<const VectorXd> b_in(p + layout_.b_in, h);
  const ConstMatMap w_out(p + layout_.w_out, 6, h);
  const Eigen::Map<const Vec6> b_out(p + layout_.b_out);
  const Vec6 bound = limits_.bounds();

  std::vector<VectorXd> hidden(layers, VectorXd::Zero(h));
  std::vector<VectorXd> cell(layers, VectorXd::Zero(h));
  unroll.steps.assign(horizon_, {});
  Vec6 x = previous.vector();
  for (std::size_t k = 0; k < horizon_; ++k) {
    auto& step = unroll.steps[k];
    step.x = x;
    step.cells.resize(layers);
    VectorXd in = w_in * x + b_in;
    for (int l = 0; l < layers; ++l) {
      const ConstMatMap w(p + layout_.w_cell[l], 4 * h, 2 * h);
      const Eigen::Map<const VectorXd> b(p + layout_.b_cell[l], 4 * h);
      auto& c = step.cells[l];
      c.in = in;
      c.h_prev = hidden[l];
      c.c_prev = cell[l];
      const VectorXd gates = w.leftCols(h) * in + w.rightCols(h) * hidden[l] + b;
      c.i = sigmoid(gates.segment(0, h));
      c.f = sigmoid(gates.segment(h, h));
      c.g = gates.segment(2 * h, h).array().tanh().matrix();
      c.o = sigmoid(gates.segment(3 * h, h));
      cell[l] = c.f.cwiseProduct(c.c_prev) + c.i.cwiseProduct(c.g);
      c.tanh_c = cell[l].array().tanh().matrix();
      hidden[l] = c.o.cwiseProduct(c.tanh_c);
      in = hidden[l];
    }
    step.top = in;
    const Vec6 z = w_out * in + b_out;
    step.squashed = (z.array() / bound.array()).tanh().matrix();
    step.v = bound.cwiseProduct(step.squashed);
    x = step.v;
  }
}

VelocityPlan ControlNet::forward(const VelocityScrew& previous) const {
  Unroll unroll;
  run(previous, unroll);
  VelocityPlan plan;
  for (const auto& s : unroll.steps) plan.twists.push_back(VelocityScrew::from_vector(s.v));
  return plan;
}

double ControlNet::loss_and_gradient(const VelocityScrew& previous, const FlowObjective& objective,
                                     Eigen::VectorXd& gradient) const {
  Unroll unroll;
  run(previous, unroll);
  Vec6 sum = Vec6::Zero();
  for (const auto& s : unroll.steps) sum += s.v;
  const double loss = objective.loss(sum);
  const Vec6 dsum = objective.gradient(sum);

  const Index h = config_.hidden;
  const int layers = config_.layers;
  const double* p = params_.data();
  gradient = VectorXd::Zero(layout_.total);
  double* g = gradient.data();
  const ConstMatMap w_in(p + layout_.w_in, h, 6);
  const ConstMatMap w_out(p + layout_.w_out, 6, h);
  MatMap dw_in(g + layout_.w_in, h, 6);
  Eigen::Map<VectorXd> db_in(g + layout_.b_in, h);
  MatMap dw_out(g + layout_.w_out, 6, h);
  Eigen::Map<Vec6> db_out(g + layout_.b_out);

  std::vector<VectorXd> dh_next(layers, VectorXd::Zero(h));
  std::vector<VectorXd> dc_next(layers, VectorXd::Zero(h));
  Vec6 dx_next = Vec6::Zero();
  for (std::size_t kk = horizon_; kk-- > 0;) {
    const auto& step = unroll.steps[kk];
    const Vec6 dv = dsum + dx_next;
    // v = b tanh(z / b)  =>  dv/dz = 1 - tanh^2
    const Vec6 dz = dv.cwiseProduct((1.0 - step.squashed.array().square()).matrix());
    dw_out.noalias() += dz * step.top.transpose();
    db_out += dz;
    VectorXd dh = w_out.transpose() * dz;
    for (int l = layers; l-- > 0;) {
      const auto& c = step.cells[l];
      const ConstMatMap w(p + layout_.w_cell[l], 4 * h, 2 * h);
      MatMap dw(g + layout_.w_cell[l], 4 * h, 2 * h);
      Eigen::Map<VectorXd> db(g + layout_.b_cell[l], 4 * h);

      const VectorXd dh_total = dh + dh_next[l];
      const VectorXd d_o = dh_total.cwiseProduct(c.tanh_c);
      const VectorXd dc = dh_total.cwiseProduct(c.o).cwiseProduct((1.0 - c.tanh_c.array().square()).matrix()) +
                          dc_next[l];
      VectorXd dgates(4 * h);
      dgates.segment(0, h) = dc.cwiseProduct(c.g).cwiseProduct(c.i.cwiseProduct((1.0 - c.i.array()).matrix()));
      dgates.segment(h, h) =
          dc.cwiseProduct(c.c_prev).cwiseProduct(c.f.cwiseProduct((1.0 - c.f.array()).matrix()));
      dgates.segment(2 * h, h) = dc.cwiseProduct(c.i).cwiseProduct((1.0 - c.g.array().square()).matrix());
      dgates.segment(3 * h, h) = d_o.cwiseProduct(c.o.cwiseProduct((1.0 - c.o.array()).matrix()));
      dc_next[l] = dc.cwiseProduct(c.f);

      dw.leftCols(h).noalias() += dgates * c.in.transpose();
      dw.rightCols(h).noalias() += dgates * c.h_prev.transpose();
      db += dgates;
      dh_next[l] = w.rightCols(h).transpose() * dgates;
      dh = w.leftCols(h).transpose() * dgates;
    }
    dw_in.noalias() += dh * step.x.transpose();
    db_in += dh;
    dx_next = w_in.transpose() * dh;
  }
  return loss;
}

}  // namespace flowservo
