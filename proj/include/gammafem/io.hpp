#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "gammafem/flb.hpp"
#include "gammafem/mesh.hpp"
#include "gammafem/tensor.hpp"

namespace gfem {

/// Binary tensor container: "GFTC" magic, a u32 little-endian header length,
/// a JSON header {"dtype":"f64","order":"row-major","shape":[...]} and the
/// row-major float64 payload, little-endian.
void write_tensor(std::ostream& out, const DenseTensor& tensor);
void write_tensor_file(const std::string& path, const DenseTensor& tensor);
DenseTensor read_tensor(std::istream& in);
DenseTensor read_tensor_file(const std::string& path);

/// Mesh file: a JSON header record (dim, embed_dim, counts, closed flag)
/// followed by the node and cell containers (cell ids stored as exact
/// doubles).
void write_mesh_file(const std::string& path, const SimplicialMesh& mesh);
SimplicialMesh read_mesh_file(const std::string& path);

/// Spectral basis file: JSON header (k0, refine level, node counts) plus
/// containers for the eigenvalues, the eigenvector matrix and the fine mass
/// triplets [nnz, 3].
void write_spectral_basis_file(const std::string& path, const SpectralBasis& basis);

struct SpectralBasisData {
  Index k0 = 0;
  Index refine_level = 0;
  Index coarse_nodes = 0;
  Index fine_nodes = 0;
  std::vector<double> eigenvalues;
  DenseTensor eigenvectors;
  DenseTensor mass_triplets;  // [nnz, 3] rows (i, j, value)
};
SpectralBasisData read_spectral_basis_file(const std::string& path);

/// Deterministic CSV writing: cells are formatted with "%.17g".
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);
  ~CsvWriter();
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  void header(const std::vector<std::string>& names);
  void row(const std::vector<double>& values);
  void raw_row(const std::vector<std::string>& cells);

 private:
  struct Impl;
  Impl* impl_;
};

std::string format_double(double v);

}  // namespace gfem
