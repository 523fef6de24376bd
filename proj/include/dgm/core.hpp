#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgm {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

// All library failures surface as dgm::Error (or a subclass) carrying a
// one-line diagnostic.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Raised by the optimizer/objective when a gradient or loss is NaN/Inf.
class NonFiniteError : public Error {
public:
  NonFiniteError(const std::string &component, const std::string &what)
      : Error("non-finite " + what + " in component '" + component + "'"),
        component_(component) {}
  const std::string &component() const { return component_; }

private:
  std::string component_;
};

// Interleaved H x W x C raster, row-major.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c, T fill = T{})
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  T &at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  const T &at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
  bool same_shape(const Image &o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
  bool operator==(const Image &) const = default;
};

using ImageD = Image<double>;
using ImageF = Image<float>;
using ImageU8 = Image<std::uint8_t>;
using ImageU16 = Image<std::uint16_t>;

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace dgm
