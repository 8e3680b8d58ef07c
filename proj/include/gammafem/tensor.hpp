#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace gfem {

using Index = std::int64_t;

/// Dense multi-axis array of doubles in row-major order.
class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(std::vector<Index> shape);
  DenseTensor(std::vector<Index> shape, std::vector<double> data);

  const std::vector<Index>& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index extent(Index axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  Index size() const { return static_cast<Index>(data_.size()); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  double operator[](Index flat) const { return data_[static_cast<std::size_t>(flat)]; }
  double& operator[](Index flat) { return data_[static_cast<std::size_t>(flat)]; }

  double at(std::initializer_list<Index> idx) const;
  double& at(std::initializer_list<Index> idx);

  /// Row-major strides, one per axis.
  std::vector<Index> strides() const;

  bool all_finite() const;

  /// Throws std::runtime_error if any entry is non-finite.
  void require_finite(const char* what) const;

 private:
  std::vector<Index> shape_;
  std::vector<double> data_;
};

/// Generalized tensor contraction over named axes, e.g. "qkb,nbd->nqkd".
///
/// Every axis of every operand is named by one letter; repeated letters are
/// summed unless they appear on the output side. Output axes are laid out in
/// the order given after "->". Letters shared between operands must have
/// equal extents.
DenseTensor contract(const std::string& spec, const std::vector<const DenseTensor*>& operands);

DenseTensor contract(const std::string& spec, const DenseTensor& a);
DenseTensor contract(const std::string& spec, const DenseTensor& a, const DenseTensor& b);
DenseTensor contract(const std::string& spec, const DenseTensor& a, const DenseTensor& b,
                     const DenseTensor& c);
DenseTensor contract(const std::string& spec, const DenseTensor& a, const DenseTensor& b,
                     const DenseTensor& c, const DenseTensor& d);
DenseTensor contract(const std::string& spec, const DenseTensor& a, const DenseTensor& b,
                     const DenseTensor& c, const DenseTensor& d, const DenseTensor& e);

}  // namespace gfem
