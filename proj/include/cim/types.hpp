#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>

namespace cim {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrixd = Matrix<double>;
using Vectord = Vector<double>;
using RowVectord = RowVector<double>;

/// Index tuple (source, dest, meme, time) of one tensor cell.
using Cell = std::array<Index, 4>;

/// Shape of a 4th-order tensor, in mode order (source, dest, meme, time).
using Dims4 = std::array<Index, 4>;

}  // namespace cim
