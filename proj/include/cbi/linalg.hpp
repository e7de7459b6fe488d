#pragma once

// Least-squares solves with an explicit, column-named rank check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cbi/core_model.hpp"

namespace cbi {

inline constexpr double kRankTolerance = 1e-10;

class RankDeficientError : public Error {
public:
    RankDeficientError(std::size_t column, const std::string& name)
        : Error("design is rank deficient: column " + std::to_string(column) + " ('" + name +
                "') is a linear combination of the preceding columns"),
          column_(column) {}

    std::size_t column() const { return column_; }

private:
    std::size_t column_;
};

inline std::string column_name(const std::vector<std::string>& names, std::size_t j) {
    return j < names.size() ? names[j] : "column " + std::to_string(j);
}

/// Symmetric elimination in column order. A pivot at or below
/// kRankTolerance * max|diag| marks that column as dependent on the earlier
/// ones. Throws RankDeficientError for the first such column.
inline void check_rank(const Eigen::MatrixXd& gram, const std::vector<std::string>& names) {
    const auto k = static_cast<std::size_t>(gram.rows());
    if (k == 0) return;
    const double max_diag = gram.diagonal().cwiseAbs().maxCoeff();
    const double tol = kRankTolerance * max_diag;
    if (!(max_diag > 0.0)) throw RankDeficientError(0, column_name(names, 0));

    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(gram.rows(), gram.cols());
    Eigen::VectorXd D = Eigen::VectorXd::Zero(gram.rows());
    for (Eigen::Index j = 0; j < gram.rows(); ++j) {
        double dj = gram(j, j);
        for (Eigen::Index m = 0; m < j; ++m) dj -= L(j, m) * L(j, m) * D(m);
        if (std::abs(dj) <= tol) {
            throw RankDeficientError(static_cast<std::size_t>(j),
                                     column_name(names, static_cast<std::size_t>(j)));
        }
        D(j) = dj;
        L(j, j) = 1.0;
        for (Eigen::Index i = j + 1; i < gram.rows(); ++i) {
            double s = gram(i, j);
            for (Eigen::Index m = 0; m < j; ++m) s -= L(i, m) * L(j, m) * D(m);
            L(i, j) = s / dj;
        }
    }
}

/// Solves gram * b = cross after the rank check.
inline Eigen::VectorXd solve_moments(const Eigen::MatrixXd& gram, const Eigen::VectorXd& cross,
                                     const std::vector<std::string>& names = {}) {
    if (gram.rows() != gram.cols() || gram.rows() != cross.size()) {
        throw Error("moment system dimensions do not agree");
    }
    check_rank(gram, names);
    return gram.colPivHouseholderQr().solve(cross);
}

/// Ordinary least squares via Householder QR of the design matrix.
inline Eigen::VectorXd least_squares(const Eigen::MatrixXd& design,
                                     const Eigen::VectorXd& response,
                                     const std::vector<std::string>& names = {}) {
    if (design.rows() != response.size()) {
        throw Error("design and response have different row counts");
    }
    if (design.rows() < design.cols()) {
        throw Error("fewer observations than regressors");
    }
    const Eigen::MatrixXd gram = design.transpose() * design;
    check_rank(gram, names);
    return design.householderQr().solve(response);
}

}  // namespace cbi
