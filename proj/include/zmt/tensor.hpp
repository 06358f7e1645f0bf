#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

namespace zmt {

using Shape = std::vector<std::int64_t>;
using Axes = std::vector<std::string>;

/// Dense real tensor with one string label per axis and a fixed row-major
/// layout over the declared axis order. Labels within a tensor are pairwise
/// distinct; all cross-tensor plumbing (contraction, network assembly) is
/// driven by labels, never by axis position.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Axes axes, Shape shape);
  Tensor(Axes axes, Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  /// n x n identity with axes (ax0, ax1).
  static Tensor identity(const std::string& ax0, const std::string& ax1,
                         std::int64_t n);

  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t size() const;
  const Shape& shape() const { return shape_; }
  const Axes& axes() const { return axes_; }

  bool has_axis(const std::string& label) const;
  int axis_index(const std::string& label) const; // throws if absent
  std::int64_t dim(const std::string& label) const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& at(std::initializer_list<std::int64_t> idx);
  double at(std::initializer_list<std::int64_t> idx) const;

  /// Label-only edits; data is shared/copied unchanged.
  Tensor renamed(const std::string& from, const std::string& to) const;
  Tensor renamed(const std::vector<std::pair<std::string, std::string>>& map) const;

  Tensor& operator*=(double c);
  double norm() const;     // Frobenius
  double max_abs() const;
  bool all_finite() const;

 private:
  Axes axes_;
  Shape shape_;
  std::vector<double> data_;

  void validate() const;
};

/// Data-reordering copy so that axes appear in `order` (a permutation of the
/// current labels).
Tensor permuted(const Tensor& t, const Axes& order);

/// Pairwise contraction over `pairs` of (axis-of-a, axis-of-b). Result axes
/// are the unpaired axes of `a` followed by those of `b`. With empty `pairs`
/// this is the outer product.
Tensor contract(const Tensor& a, const Tensor& b,
                const std::vector<std::pair<std::string, std::string>>& pairs);

struct FuseGroup {
  std::string name;
  Axes members; // fused index runs row-major over members in this order
};

/// Merge axes group-wise; `groups` must cover all axes exactly once.
Tensor fuse(const Tensor& t, const std::vector<FuseGroup>& groups);

/// Inverse of fuse for one axis, given the remembered member names/extents.
Tensor split(const Tensor& t, const std::string& axis, const Axes& names,
             const Shape& dims);

/// Elementwise a + c*b; b is aligned to a's axis order by label.
Tensor add(const Tensor& a, const Tensor& b, double c = 1.0);

/// Full contraction of two tensors over the same label set (inner product).
double inner(const Tensor& a, const Tensor& b);

/// Contract a list of tensors over all shared labels (each label may appear
/// in at most two tensors). Pair order is chosen greedily by result size;
/// only the numerical result is part of the contract.
Tensor contract_network(std::vector<Tensor> tensors);

/// Labels appearing exactly once / exactly twice across the list.
Axes open_axes(const std::vector<Tensor>& tensors);
Axes bond_axes(const std::vector<Tensor>& tensors);

/// Bra copy of a network: every internal bond label gets `suffix`; labels in
/// `also_suffix` are suffixed too; all other (open) labels are kept so they
/// pair with the matching ket axes in an overlap diagram.
std::vector<Tensor> bra_copy(const std::vector<Tensor>& tensors,
                             const std::string& suffix,
                             const Axes& also_suffix = {});

/// <bra|ket> for two networks with identical open axes (identity closure).
double overlap(const std::vector<Tensor>& ket, const std::vector<Tensor>& bra);

inline double network_norm2(const std::vector<Tensor>& ket) {
  return overlap(ket, ket);
}

} // namespace zmt
