#include "gammafem/tensor.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace gfem {

namespace {

Index shape_product(const std::vector<Index>& shape) {
  Index n = 1;
  for (Index e : shape) {
    if (e < 0) throw std::invalid_argument("DenseTensor: negative axis length");
    n *= e;
  }
  return n;
}

}  // namespace

DenseTensor::DenseTensor(std::vector<Index> shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_product(shape_)), 0.0) {}

DenseTensor::DenseTensor(std::vector<Index> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != static_cast<Index>(data_.size()))
    throw std::invalid_argument("DenseTensor: shape/data length mismatch");
}

std::vector<Index> DenseTensor::strides() const {
  std::vector<Index> s(shape_.size());
  Index acc = 1;
  for (std::size_t a = shape_.size(); a-- > 0;) {
    s[a] = acc;
    acc *= shape_[a];
  }
  return s;
}

double DenseTensor::at(std::initializer_list<Index> idx) const {
  return data_[static_cast<std::size_t>(
      std::inner_product(idx.begin(), idx.end(), strides().begin(), Index{0}))];
}

double& DenseTensor::at(std::initializer_list<Index> idx) {
  return data_[static_cast<std::size_t>(
      std::inner_product(idx.begin(), idx.end(), strides().begin(), Index{0}))];
}

bool DenseTensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void DenseTensor::require_finite(const char* what) const {
  if (!all_finite()) throw std::runtime_error(std::string(what) + ": non-finite entry");
}

namespace {

struct ParsedSpec {
  std::vector<std::string> inputs;
  std::string output;
};

ParsedSpec parse_spec(const std::string& spec) {
  const auto arrow = spec.find("->");
  if (arrow == std::string::npos) throw std::invalid_argument("contract: spec must contain '->'");
  ParsedSpec p;
  for (char ch : spec.substr(arrow + 2))
    if (ch != ' ') p.output.push_back(ch);
  std::string cur;
  for (char ch : spec.substr(0, arrow)) {
    if (ch == ',') {
      p.inputs.push_back(cur);
      cur.clear();
    } else if (ch != ' ') {
      cur.push_back(ch);
    }
  }
  p.inputs.push_back(cur);
  return p;
}

}  // namespace

DenseTensor contract(const std::string& spec, const std::vector<const DenseTensor*>& operands) {
  const ParsedSpec parsed = parse_spec(spec);
  const std::size_t n_ops = operands.size();
  if (parsed.inputs.size() != n_ops)
    throw std::invalid_argument("contract: operand count does not match spec");

  // Letter extents; repeated letters must agree across all occurrences.
  std::unordered_map<char, Index> extent;
  std::vector<char> appearance;
  for (std::size_t i = 0; i < n_ops; ++i) {
    const std::string& sub = parsed.inputs[i];
    const DenseTensor& t = *operands[i];
    if (static_cast<Index>(sub.size()) != t.rank())
      throw std::invalid_argument("contract: subscript rank mismatch for operand " +
                                  std::to_string(i));
    for (std::size_t a = 0; a < sub.size(); ++a) {
      const char letter = sub[a];
      const Index e = t.extent(static_cast<Index>(a));
      auto it = extent.find(letter);
      if (it == extent.end()) {
        extent.emplace(letter, e);
        appearance.push_back(letter);
      } else if (it->second != e) {
        throw std::invalid_argument(std::string("contract: axis length mismatch for '") + letter +
                                    "'");
      }
    }
  }

  std::unordered_map<char, bool> in_output;
  for (char letter : parsed.output) {
    if (!extent.count(letter))
      throw std::invalid_argument(std::string("contract: unknown output letter '") + letter + "'");
    if (in_output.count(letter))
      throw std::invalid_argument(std::string("contract: repeated output letter '") + letter +
                                  "'");
    in_output[letter] = true;
  }

  // Loop axes: output letters in output order, then contracted letters in
  // first-appearance order.
  std::vector<char> axes(parsed.output.begin(), parsed.output.end());
  for (char letter : appearance)
    if (!in_output.count(letter)) axes.push_back(letter);

  const std::size_t n_out_axes = parsed.output.size();
  const std::size_t n_axes = axes.size();
  std::vector<Index> dims(n_axes);
  for (std::size_t a = 0; a < n_axes; ++a) dims[a] = extent[axes[a]];

  // Per-operand stride along each loop axis; a letter occurring twice in one
  // operand (trace) contributes the sum of its position strides.
  std::vector<std::vector<Index>> step(n_ops, std::vector<Index>(n_axes, 0));
  for (std::size_t i = 0; i < n_ops; ++i) {
    const auto strides = operands[i]->strides();
    const std::string& sub = parsed.inputs[i];
    for (std::size_t a = 0; a < n_axes; ++a)
      for (std::size_t p = 0; p < sub.size(); ++p)
        if (sub[p] == axes[a]) step[i][a] += strides[p];
  }

  std::vector<Index> out_shape(dims.begin(), dims.begin() + static_cast<std::ptrdiff_t>(n_out_axes));
  DenseTensor result(out_shape);
  std::span<double> out = result.data();

  Index out_total = 1;
  for (std::size_t a = 0; a < n_out_axes; ++a) out_total *= dims[a];
  Index inner_total = 1;
  for (std::size_t a = n_out_axes; a < n_axes; ++a) inner_total *= dims[a];
  if (out_total == 0 || inner_total == 0) return result;

  std::vector<const double*> base_ptr(n_ops);
  for (std::size_t i = 0; i < n_ops; ++i) base_ptr[i] = operands[i]->data().data();

  std::vector<Index> outer_counter(n_out_axes, 0);
  std::vector<Index> base(n_ops, 0);
  std::vector<Index> inner_counter(n_axes - n_out_axes, 0);
  std::vector<Index> offset(n_ops, 0);

  for (Index out_pos = 0; out_pos < out_total; ++out_pos) {
    double acc = 0.0;
    offset = base;
    std::fill(inner_counter.begin(), inner_counter.end(), Index{0});
    for (Index ip = 0; ip < inner_total; ++ip) {
      double prod = 1.0;
      for (std::size_t i = 0; i < n_ops; ++i) prod *= base_ptr[i][offset[i]];
      acc += prod;
      // Advance inner odometer (axes n_out_axes..n_axes).
      for (std::size_t a = n_axes; a-- > n_out_axes;) {
        const std::size_t ic = a - n_out_axes;
        inner_counter[ic] += 1;
        for (std::size_t i = 0; i < n_ops; ++i) offset[i] += step[i][a];
        if (inner_counter[ic] < dims[a]) break;
        inner_counter[ic] = 0;
        for (std::size_t i = 0; i < n_ops; ++i) offset[i] -= dims[a] * step[i][a];
      }
    }
    out[static_cast<std::size_t>(out_pos)] = acc;
    // Advance outer odometer.
    for (std::size_t a = n_out_axes; a-- > 0;) {
      outer_counter[a] += 1;
      for (std::size_t i = 0; i < n_ops; ++i) base[i] += step[i][a];
      if (outer_counter[a] < dims[a]) break;
      outer_counter[a] = 0;
      for (std::size_t i = 0; i < n_ops; ++i) base[i] -= dims[a] * step[i][a];
    }
  }
  result.require_finite("contract");
  return result;
}

DenseTensor contract(const std::string& spec, const DenseTensor& a) { return contract(spec, {&a}); }
DenseTensor contract(const std::string& spec, const DenseTensor& a, const DenseTensor& b) {
  return contract(spec, {&a, &b});
}
DenseTensor contract(const std::string& spec, const DenseTensor& a, const DenseTensor& b,
                     const DenseTensor& c) {
  return contract(spec, {&a, &b, &c});
}
DenseTensor contract(const std::string& spec, const DenseTensor& a, const DenseTensor& b,
                     const DenseTensor& c, const DenseTensor& d) {
  return contract(spec, {&a, &b, &c, &d});
}
DenseTensor contract(const std::string& spec, const DenseTensor& a, const DenseTensor& b,
                     const DenseTensor& c, const DenseTensor& d, const DenseTensor& e) {
  return contract(spec, {&a, &b, &c, &d, &e});
}

}  // namespace gfem
