#include "gammafem/io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace gfem {

namespace {

constexpr char kMagic[4] = {'G', 'F', 'T', 'C'};

void write_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("tensor container: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

static_assert(sizeof(double) == 8);

}  // namespace

void write_tensor(std::ostream& out, const DenseTensor& tensor) {
  nlohmann::json header;
  header["dtype"] = "f64";
  header["order"] = "row-major";
  header["shape"] = tensor.shape();
  const std::string text = header.dump();
  out.write(kMagic, 4);
  write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  // Little-endian hosts only; asserted at build time for the doubles below.
  out.write(reinterpret_cast<const char*>(tensor.data().data()),
            static_cast<std::streamsize>(tensor.size() * 8));
  if (!out) throw std::runtime_error("tensor container: write failed");
}

DenseTensor read_tensor(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("tensor container: bad magic");
  const std::uint32_t len = read_u32(in);
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (!in) throw std::runtime_error("tensor container: truncated header");
  const auto header = nlohmann::json::parse(text);
  if (header.at("dtype") != "f64" || header.at("order") != "row-major")
    throw std::runtime_error("tensor container: unsupported layout");
  std::vector<Index> shape = header.at("shape").get<std::vector<Index>>();
  Index total = 1;
  for (Index e : shape) total *= e;
  std::vector<double> data(static_cast<std::size_t>(total));
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(total * 8));
  if (!in) throw std::runtime_error("tensor container: truncated payload");
  return DenseTensor(std::move(shape), std::move(data));
}

void write_tensor_file(const std::string& path, const DenseTensor& tensor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  write_tensor(out, tensor);
}

DenseTensor read_tensor_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  return read_tensor(in);
}

namespace {

void write_json_record(std::ostream& out, const nlohmann::json& j) {
  const std::string text = j.dump();
  out.write(kMagic, 4);
  write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

nlohmann::json read_json_record(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("container stream: bad magic");
  const std::uint32_t len = read_u32(in);
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (!in) throw std::runtime_error("container stream: truncated record");
  return nlohmann::json::parse(text);
}

}  // namespace

void write_mesh_file(const std::string& path, const SimplicialMesh& mesh) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  nlohmann::json header;
  header["kind"] = "mesh";
  header["dim"] = mesh.dim;
  header["embed_dim"] = mesh.embed_dim;
  header["num_nodes"] = mesh.num_nodes();
  header["num_cells"] = mesh.num_cells();
  header["closed_curve"] = mesh.closed_curve;
  write_json_record(out, header);
  write_tensor(out, mesh.nodes);
  DenseTensor cells({mesh.num_cells(), mesh.dim + 1});
  for (Index i = 0; i < cells.size(); ++i)
    cells[i] = static_cast<double>(mesh.cells[static_cast<std::size_t>(i)]);
  write_tensor(out, cells);
}

SimplicialMesh read_mesh_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  const auto header = read_json_record(in);
  if (header.at("kind") != "mesh") throw std::runtime_error("mesh file: wrong kind");
  SimplicialMesh mesh;
  mesh.dim = header.at("dim").get<Index>();
  mesh.embed_dim = header.at("embed_dim").get<Index>();
  mesh.closed_curve = header.at("closed_curve").get<bool>();
  mesh.nodes = read_tensor(in);
  const DenseTensor cells = read_tensor(in);
  mesh.cells.resize(static_cast<std::size_t>(cells.size()));
  for (Index i = 0; i < cells.size(); ++i)
    mesh.cells[static_cast<std::size_t>(i)] = static_cast<Index>(cells[i]);
  mesh.validate();
  return mesh;
}

void write_spectral_basis_file(const std::string& path, const SpectralBasis& basis) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  nlohmann::json header;
  header["kind"] = "spectral_basis";
  header["k0"] = basis.k0();
  header["refine_level"] = basis.refine_level();
  header["coarse_nodes"] = basis.coarse_size();
  header["fine_nodes"] = basis.fine_size();
  write_json_record(out, header);

  DenseTensor lambda({basis.k0()},
                     std::vector<double>(basis.eigenvalues().begin(), basis.eigenvalues().end()));
  write_tensor(out, lambda);
  write_tensor(out, basis.eigenvectors());

  const CsrMatrix& m = basis.fine_mass();
  DenseTensor triplets({m.nnz(), 3});
  Index t = 0;
  const auto offs = m.row_offsets();
  const auto cols = m.col_indices();
  const auto vals = m.values(0);
  for (Index r = 0; r < m.nrows(); ++r)
    for (Index p = offs[static_cast<std::size_t>(r)]; p < offs[static_cast<std::size_t>(r) + 1];
         ++p, ++t) {
      triplets[t * 3 + 0] = static_cast<double>(r);
      triplets[t * 3 + 1] = static_cast<double>(cols[static_cast<std::size_t>(p)]);
      triplets[t * 3 + 2] = vals[static_cast<std::size_t>(p)];
    }
  write_tensor(out, triplets);
}

SpectralBasisData read_spectral_basis_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  const auto header = read_json_record(in);
  if (header.at("kind") != "spectral_basis")
    throw std::runtime_error("spectral basis file: wrong kind");
  SpectralBasisData data;
  data.k0 = header.at("k0").get<Index>();
  data.refine_level = header.at("refine_level").get<Index>();
  data.coarse_nodes = header.at("coarse_nodes").get<Index>();
  data.fine_nodes = header.at("fine_nodes").get<Index>();
  const DenseTensor lambda = read_tensor(in);
  data.eigenvalues.assign(lambda.data().begin(), lambda.data().end());
  data.eigenvectors = read_tensor(in);
  data.mass_triplets = read_tensor(in);
  return data;
}

struct CsvWriter::Impl {
  std::ofstream out;
};

CsvWriter::CsvWriter(const std::string& path) : impl_(new Impl) {
  impl_->out.open(path, std::ios::binary);
  if (!impl_->out) {
    delete impl_;
    throw std::runtime_error("cannot open for writing: " + path);
  }
}

CsvWriter::~CsvWriter() { delete impl_; }

void CsvWriter::header(const std::vector<std::string>& names) { raw_row(names); }

void CsvWriter::row(const std::vector<double>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (double v : values) cells.push_back(format_double(v));
  raw_row(cells);
}

void CsvWriter::raw_row(const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i)
    impl_->out << cells[i] << (i + 1 == cells.size() ? "" : ",");
  impl_->out << "\n";
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace gfem
