#pragma once
#include <Eigen/Dense>
#include <cstdint>

namespace lrtd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Eigen::Index;

template <typename T>
using Ref = Eigen::Ref<T>;
using ConstVecRef = Eigen::Ref<const Vector>;
using ConstMatRef = Eigen::Ref<const Matrix>;

}  // namespace lrtd
