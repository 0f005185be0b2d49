#pragma once

#include <Eigen/Core>
#include <cassert>
#include <cstdint>
#include <type_traits>
#include <vector>

namespace panoslam {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;

/// Row-major raster. (x, y) indexes column x of row y.
template <typename T>
class Image {
 public:
  Image() = default;

  Image(int width, int height, const T& fill)
      : width_(width), height_(height),
        data_(static_cast<size_t>(width) * height, fill) {
    assert(width >= 0 && height >= 0);
  }

  Image(int width, int height)
    requires std::is_arithmetic_v<T>
      : Image(width, height, T(0)) {}

  int width() const { return width_; }
  int height() const { return height_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }

  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  size_t index(int x, int y) const {
    assert(x >= 0 && x < width_ && y >= 0 && y < height_);
    return static_cast<size_t>(y) * width_ + x;
  }

  bool same_size(int w, int h) const { return width_ == w && height_ == h; }

  template <typename U>
  bool same_size(const Image<U>& other) const {
    return same_size(other.width(), other.height());
  }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }
  const std::vector<T>& raw() const { return data_; }
  std::vector<T>& raw() { return data_; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using ColorImage = Image<Vec3>;      // RGB in [0,1]
using DepthImage = Image<double>;    // meters, 0 = invalid
using ScalarImage = Image<double>;
using LabelImage = Image<int32_t>;   // segment/instance ids, -1 = void

inline ColorImage make_color_image(int w, int h) {
  return ColorImage(w, h, Vec3::Zero());
}

}  // namespace panoslam
