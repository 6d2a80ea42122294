#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Dense>
#include <unsupported/Eigen/LevenbergMarquardt>

namespace fpfts::detail {

struct LsqProblem {
  int n_residuals = 0;
  std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)> residuals;
  std::function<void(const Eigen::VectorXd&, Eigen::MatrixXd&)> jacobian;
};

struct LsqSolution {
  Eigen::VectorXd params;
  // (J^T J)^-1 at the optimum; not scaled by the residual variance. Infinite
  // when the Jacobian is rank deficient (some parameter is not identifiable).
  Eigen::MatrixXd covariance;
  double sum_squares = 0.0;
  bool converged = false;
};

namespace lsq_impl {

struct Functor : Eigen::DenseFunctor<double> {
  const LsqProblem* problem;
  Functor(const LsqProblem& p, int n_params)
      : Eigen::DenseFunctor<double>(n_params, p.n_residuals), problem(&p) {}
  int operator()(const InputType& x, ValueType& f) const {
    problem->residuals(x, f);
    return 0;
  }
  int df(const InputType& x, JacobianType& j) const {
    problem->jacobian(x, j);
    return 0;
  }
};

}  // namespace lsq_impl

inline LsqSolution solve_least_squares(const LsqProblem& problem, Eigen::VectorXd start,
                                       int max_evaluations = 2000) {
  lsq_impl::Functor functor(problem, static_cast<int>(start.size()));
  Eigen::LevenbergMarquardt<lsq_impl::Functor> lm(functor);
  lm.setMaxfev(max_evaluations);
  lm.setXtol(1e-12);
  lm.setFtol(1e-12);
  const auto status = lm.minimize(start);

  LsqSolution out;
  out.params = start;
  Eigen::VectorXd r(problem.n_residuals);
  problem.residuals(start, r);
  out.sum_squares = r.squaredNorm();
  Eigen::MatrixXd j(problem.n_residuals, start.size());
  problem.jacobian(start, j);
  const Eigen::MatrixXd jtj = j.transpose() * j;
  // Column scaling keeps the rank test independent of parameter units.
  const Eigen::VectorXd scale = jtj.diagonal().cwiseSqrt().cwiseMax(1e-300);
  const Eigen::MatrixXd unit = scale.cwiseInverse().asDiagonal() * jtj * scale.cwiseInverse().asDiagonal();
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(unit);
  cod.setThreshold(1e-10);
  if (cod.rank() == unit.rows() && (jtj.diagonal().array() > 0.0).all()) {
    out.covariance = scale.cwiseInverse().asDiagonal() * cod.pseudoInverse() * scale.cwiseInverse().asDiagonal();
  } else {
    out.covariance = Eigen::MatrixXd::Constant(jtj.rows(), jtj.cols(), std::numeric_limits<double>::infinity());
  }

  using Eigen::LevenbergMarquardtSpace::Status;
  const bool finite = start.allFinite() && std::isfinite(out.sum_squares);
  out.converged = finite && status != Status::ImproperInputParameters &&
                  status != Status::TooManyFunctionEvaluation;
  return out;
}

}  // namespace fpfts::detail
