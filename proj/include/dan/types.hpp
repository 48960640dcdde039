#ifndef DAN_TYPES_HPP
#define DAN_TYPES_HPP

#include <Eigen/Dense>

namespace dan {

using Eigen::Dynamic;

template <typename T>
using Mat = Eigen::Matrix<T, Dynamic, Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Dynamic, 1>;
template <typename T>
using Arr2 = Eigen::Array<T, Dynamic, Dynamic>;
template <typename T>
using Arr1 = Eigen::Array<T, Dynamic, 1>;

using MatX = Mat<double>;
using VecX = Vec<double>;
using Arr2X = Arr2<double>;
using Arr1X = Arr1<double>;

}  // namespace dan

#endif
