#pragma once

#include <vector>

#include "rupi/error.hpp"
#include "rupi/statcore.hpp"

namespace rupi {

/// Held-out errors of a trained model.
///   rho        n×I feature-wise absolute reconstruction errors
///   err        n×O output-wise absolute prediction errors
///   rho_scalar row sums of rho (the scalar reconstruction uncertainty)
struct CalibrationErrors {
  Matrix rho;
  Matrix err;
  std::vector<double> rho_scalar;

  Eigen::Index rows() const noexcept { return rho.rows(); }

  static CalibrationErrors from(Matrix rho, Matrix err) {
    if (rho.rows() != err.rows())
      throw DataError("calibration errors: rho and err row counts differ");
    if ((rho.array() < 0.0).any() || (err.array() < 0.0).any())
      throw DataError("calibration errors must be nonnegative");
    CalibrationErrors c;
    c.rho_scalar.resize(static_cast<std::size_t>(rho.rows()));
    for (Eigen::Index i = 0; i < rho.rows(); ++i)
      c.rho_scalar[static_cast<std::size_t>(i)] = rho.row(i).sum();
    c.rho = std::move(rho);
    c.err = std::move(err);
    return c;
  }
};

}  // namespace rupi
