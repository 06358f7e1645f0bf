#include "zmt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "zmt/kernels.hpp"

namespace zmt {

namespace {

Shape strides_of(const Shape& shape) {
  Shape strides(shape.size());
  std::int64_t cur = 1;
  for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
    strides[i] = cur;
    cur *= shape[i];
  }
  return strides;
}

std::int64_t product(const Shape& shape) {
  std::int64_t p = 1;
  for (auto s : shape) p *= s;
  return p;
}

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void check_finite(const Tensor& t, const char* op) {
  if (!t.all_finite())
    throw std::runtime_error(std::string(op) + ": non-finite entries in result");
}

} // namespace

Tensor::Tensor(Axes axes, Shape shape)
    : axes_(std::move(axes)), shape_(std::move(shape)),
      data_(static_cast<std::size_t>(product(shape_)), 0.0) {
  validate();
}

Tensor::Tensor(Axes axes, Shape shape, std::vector<double> data)
    : axes_(std::move(axes)), shape_(std::move(shape)), data_(std::move(data)) {
  validate();
  if (static_cast<std::int64_t>(data_.size()) != product(shape_))
    fail("Tensor: data length does not match shape");
}

void Tensor::validate() const {
  if (axes_.size() != shape_.size()) fail("Tensor: axes/shape rank mismatch");
  for (auto s : shape_)
    if (s <= 0) fail("Tensor: axis lengths must be positive");
  std::set<std::string> seen(axes_.begin(), axes_.end());
  if (seen.size() != axes_.size()) fail("Tensor: duplicate axis labels");
}

Tensor Tensor::scalar(double value) { return Tensor({}, {}, {value}); }

Tensor Tensor::identity(const std::string& ax0, const std::string& ax1,
                        std::int64_t n) {
  Tensor t({ax0, ax1}, {n, n});
  for (std::int64_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
  return t;
}

std::int64_t Tensor::size() const { return static_cast<std::int64_t>(data_.size()); }

bool Tensor::has_axis(const std::string& label) const {
  return std::find(axes_.begin(), axes_.end(), label) != axes_.end();
}

int Tensor::axis_index(const std::string& label) const {
  auto it = std::find(axes_.begin(), axes_.end(), label);
  if (it == axes_.end()) fail("Tensor: no axis named '" + label + "'");
  return static_cast<int>(it - axes_.begin());
}

std::int64_t Tensor::dim(const std::string& label) const {
  return shape_[axis_index(label)];
}

double& Tensor::at(std::initializer_list<std::int64_t> idx) {
  if (static_cast<std::int64_t>(idx.size()) != rank()) fail("Tensor::at: rank mismatch");
  const Shape st = strides_of(shape_);
  std::int64_t off = 0;
  int k = 0;
  for (auto i : idx) off += i * st[k++];
  return data_[off];
}

double Tensor::at(std::initializer_list<std::int64_t> idx) const {
  return const_cast<Tensor*>(this)->at(idx);
}

Tensor Tensor::renamed(const std::string& from, const std::string& to) const {
  return renamed(std::vector<std::pair<std::string, std::string>>{{from, to}});
}

Tensor Tensor::renamed(
    const std::vector<std::pair<std::string, std::string>>& map) const {
  Tensor out = *this;
  for (const auto& [from, to] : map) {
    out.axes_[out.axis_index(from)] = to;
  }
  out.validate();
  return out;
}

Tensor& Tensor::operator*=(double c) {
  for (auto& v : data_) v *= c;
  return *this;
}

double Tensor::norm() const {
  double s = 0;
  for (auto v : data_) s += v * v;
  return std::sqrt(s);
}

double Tensor::max_abs() const {
  double m = 0;
  for (auto v : data_) m = std::max(m, std::abs(v));
  return m;
}

bool Tensor::all_finite() const {
  for (auto v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor permuted(const Tensor& t, const Axes& order) {
  if (order == t.axes()) return t;
  if (order.size() != t.axes().size()) fail("permuted: order must list every axis");
  const Shape in_strides = strides_of(t.shape());
  Shape out_shape(order.size());
  Shape gather(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const int src = t.axis_index(order[k]);
    out_shape[k] = t.shape()[src];
    gather[k] = in_strides[src];
  }
  std::vector<double> out(static_cast<std::size_t>(t.size()));
  kernels::permute_copy(t.data(), out.data(), out_shape, gather);
  return Tensor(order, out_shape, std::move(out));
}

Tensor contract(const Tensor& a, const Tensor& b,
                const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::set<std::string> con_a, con_b;
  for (const auto& [la, lb] : pairs) {
    if (a.dim(la) != b.dim(lb))
      fail("contract: axis length mismatch on (" + la + ", " + lb + ")");
    if (!con_a.insert(la).second || !con_b.insert(lb).second)
      fail("contract: axis paired twice");
  }
  Axes free_a, free_b;
  for (const auto& ax : a.axes())
    if (!con_a.count(ax)) free_a.push_back(ax);
  for (const auto& ax : b.axes())
    if (!con_b.count(ax)) free_b.push_back(ax);
  for (const auto& ax : free_b)
    if (std::find(free_a.begin(), free_a.end(), ax) != free_a.end())
      fail("contract: duplicate result label '" + ax + "'");

  Axes order_a = free_a, order_b;
  for (const auto& [la, lb] : pairs) order_a.push_back(la);
  for (const auto& [la, lb] : pairs) order_b.push_back(lb);
  for (const auto& ax : free_b) order_b.push_back(ax);

  const Tensor pa = permuted(a, order_a);
  const Tensor pb = permuted(b, order_b);

  std::int64_t m = 1, k = 1, n = 1;
  Shape out_shape;
  Axes out_axes;
  for (const auto& ax : free_a) {
    out_axes.push_back(ax);
    out_shape.push_back(a.dim(ax));
    m *= a.dim(ax);
  }
  for (const auto& [la, lb] : pairs) k *= a.dim(la);
  for (const auto& ax : free_b) {
    out_axes.push_back(ax);
    out_shape.push_back(b.dim(ax));
    n *= b.dim(ax);
  }

  std::vector<double> out(static_cast<std::size_t>(m * n));
  kernels::matmul(pa.data(), pb.data(), out.data(), m, k, n);
  Tensor result(out_axes, out_shape, std::move(out));
  check_finite(result, "contract");
  return result;
}

Tensor fuse(const Tensor& t, const std::vector<FuseGroup>& groups) {
  std::set<std::string> covered;
  std::size_t n_members = 0;
  Axes order;
  for (const auto& g : groups) {
    for (const auto& m : g.members) {
      if (!covered.insert(m).second) fail("fuse: axis '" + m + "' grouped twice");
      order.push_back(m);
      ++n_members;
    }
  }
  if (n_members != t.axes().size()) fail("fuse: groups must cover all axes");
  const Tensor p = permuted(t, order);
  Axes out_axes;
  Shape out_shape;
  for (const auto& g : groups) {
    std::int64_t len = 1;
    for (const auto& m : g.members) len *= t.dim(m);
    out_axes.push_back(g.name);
    out_shape.push_back(len);
  }
  return Tensor(out_axes, out_shape, p.storage());
}

Tensor split(const Tensor& t, const std::string& axis, const Axes& names,
             const Shape& dims) {
  const int pos = t.axis_index(axis);
  if (names.size() != dims.size()) fail("split: names/dims mismatch");
  if (product(dims) != t.shape()[pos]) fail("split: shape mismatch for '" + axis + "'");
  Axes out_axes;
  Shape out_shape;
  for (int i = 0; i < t.rank(); ++i) {
    if (i == pos) {
      for (std::size_t k = 0; k < names.size(); ++k) {
        out_axes.push_back(names[k]);
        out_shape.push_back(dims[k]);
      }
    } else {
      out_axes.push_back(t.axes()[i]);
      out_shape.push_back(t.shape()[i]);
    }
  }
  return Tensor(out_axes, out_shape, t.storage());
}

Tensor add(const Tensor& a, const Tensor& b, double c) {
  const Tensor pb = permuted(b, a.axes());
  if (pb.shape() != a.shape()) fail("add: shape mismatch");
  Tensor out = a;
  for (std::int64_t i = 0; i < a.size(); ++i) out.data()[i] += c * pb.data()[i];
  check_finite(out, "add");
  return out;
}

double inner(const Tensor& a, const Tensor& b) {
  const Tensor pb = permuted(b, a.axes());
  if (pb.shape() != a.shape()) fail("inner: shape mismatch");
  double s = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) s += a.data()[i] * pb.data()[i];
  return s;
}

Axes open_axes(const std::vector<Tensor>& tensors) {
  std::vector<std::pair<std::string, int>> counts;
  for (const auto& t : tensors)
    for (const auto& ax : t.axes()) {
      auto it = std::find_if(counts.begin(), counts.end(),
                             [&](const auto& p) { return p.first == ax; });
      if (it == counts.end()) counts.push_back({ax, 1});
      else ++it->second;
    }
  Axes open;
  for (const auto& [ax, c] : counts)
    if (c == 1) open.push_back(ax);
  return open;
}

Axes bond_axes(const std::vector<Tensor>& tensors) {
  std::vector<std::pair<std::string, int>> counts;
  for (const auto& t : tensors)
    for (const auto& ax : t.axes()) {
      auto it = std::find_if(counts.begin(), counts.end(),
                             [&](const auto& p) { return p.first == ax; });
      if (it == counts.end()) counts.push_back({ax, 1});
      else ++it->second;
    }
  Axes bonds;
  for (const auto& [ax, c] : counts) {
    if (c == 2) bonds.push_back(ax);
    if (c > 2) fail("network: label '" + ax + "' appears more than twice");
  }
  return bonds;
}

Tensor contract_network(std::vector<Tensor> tensors) {
  if (tensors.empty()) fail("contract_network: empty network");
  bond_axes(tensors); // validates multiplicity
  while (tensors.size() > 1) {
    // pick the sharing pair with the smallest contraction result
    std::int64_t best_i = -1, best_j = -1, best_size = -1;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      for (std::size_t j = i + 1; j < tensors.size(); ++j) {
        std::int64_t shared2 = 1;
        for (const auto& ax : tensors[i].axes())
          if (tensors[j].has_axis(ax)) shared2 *= tensors[i].dim(ax) * tensors[i].dim(ax);
        if (shared2 == 1) continue;
        const std::int64_t sz = tensors[i].size() * tensors[j].size() / shared2;
        if (best_size < 0 || sz < best_size) {
          best_size = sz;
          best_i = static_cast<std::int64_t>(i);
          best_j = static_cast<std::int64_t>(j);
        }
      }
    }
    if (best_i < 0) {
      // disconnected pieces: outer-product the two smallest
      std::sort(tensors.begin(), tensors.end(),
                [](const Tensor& x, const Tensor& y) { return x.size() < y.size(); });
      best_i = 0;
      best_j = 1;
    }
    Tensor& a = tensors[best_i];
    Tensor& b = tensors[best_j];
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& ax : a.axes())
      if (b.has_axis(ax)) pairs.push_back({ax, ax});
    Tensor merged = contract(a, b, pairs);
    tensors.erase(tensors.begin() + best_j);
    tensors[best_i] = std::move(merged);
  }
  return tensors.front();
}

std::vector<Tensor> bra_copy(const std::vector<Tensor>& tensors,
                             const std::string& suffix, const Axes& also_suffix) {
  const Axes bonds = bond_axes(tensors);
  std::vector<Tensor> bra;
  bra.reserve(tensors.size());
  for (const auto& t : tensors) {
    std::vector<std::pair<std::string, std::string>> map;
    for (const auto& ax : t.axes()) {
      const bool is_bond = std::find(bonds.begin(), bonds.end(), ax) != bonds.end();
      const bool forced =
          std::find(also_suffix.begin(), also_suffix.end(), ax) != also_suffix.end();
      if (is_bond || forced) map.push_back({ax, ax + suffix});
    }
    bra.push_back(t.renamed(map));
  }
  return bra;
}

double overlap(const std::vector<Tensor>& ket, const std::vector<Tensor>& bra) {
  std::vector<Tensor> all = ket;
  const auto b = bra_copy(bra, "~ovl");
  all.insert(all.end(), b.begin(), b.end());
  const Tensor r = contract_network(std::move(all));
  if (r.rank() != 0)
    fail("overlap: networks do not close (mismatched open axes)");
  return r.data()[0];
}

} // namespace zmt
