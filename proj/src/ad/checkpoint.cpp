#include "ddgen/ad/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ddgen::ad {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

std::string read_line(std::istream& in, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(in, line)) {
    throw CheckpointError("truncated checkpoint: " + path.string());
  }
  return line;
}

std::size_t parse_count(const std::string& line, std::string_view keyword,
                        const std::filesystem::path& path) {
  std::istringstream ss(line);
  std::string word;
  std::size_t n = 0;
  if (!(ss >> word >> n) || word != keyword) {
    throw CheckpointError("malformed '" + std::string(keyword) + "' line in " + path.string());
  }
  return n;
}

}  // namespace

void Checkpoint::put(std::string name, Matrix value) {
  for (auto& [n, m] : tensors) {
    if (n == name) {
      m = std::move(value);
      return;
    }
  }
  tensors.emplace_back(std::move(name), std::move(value));
}

const Matrix* Checkpoint::find(std::string_view name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return &m;
  return nullptr;
}

const Matrix& Checkpoint::at(std::string_view name) const {
  if (const Matrix* m = find(name)) return *m;
  throw CheckpointError("checkpoint has no tensor '" + std::string(name) + "'");
}

const std::string& Checkpoint::meta_at(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw CheckpointError("checkpoint has no metadata '" + key + "'");
  return it->second;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
  out << "DDGEN-CHECKPOINT " << Checkpoint::kVersion << '\n';
  out << "meta " << ckpt.meta.size() << '\n';
  for (const auto& [k, v] : ckpt.meta) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw CheckpointError("checkpoint metadata may not contain newlines or '=' in keys: " + k);
    }
    out << k << '=' << v << '\n';
  }
  out << "tensors " << ckpt.tensors.size() << '\n';
  for (const auto& [name, m] : ckpt.tensors) {
    if (name.find_first_of(" \n") != std::string::npos) {
      throw CheckpointError("tensor names may not contain whitespace: " + name);
    }
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    out.write(reinterpret_cast<const char*>(m.data().data()),
              static_cast<std::streamsize>(m.size() * sizeof(double)));
    out << '\n';
  }
  if (!out) throw CheckpointError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  Checkpoint ckpt;
  {
    std::istringstream ss(read_line(in, path));
    std::string magic;
    int version = 0;
    if (!(ss >> magic >> version) || magic != "DDGEN-CHECKPOINT") {
      throw CheckpointError("not a checkpoint file: " + path.string());
    }
    if (version != Checkpoint::kVersion) {
      throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
  }
  const std::size_t n_meta = parse_count(read_line(in, path), "meta", path);
  for (std::size_t i = 0; i < n_meta; ++i) {
    const std::string line = read_line(in, path);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("malformed metadata line: " + line);
    ckpt.meta.emplace(line.substr(0, eq), line.substr(eq + 1));
  }
  const std::size_t n_tensors = parse_count(read_line(in, path), "tensors", path);
  for (std::size_t i = 0; i < n_tensors; ++i) {
    std::istringstream ss(read_line(in, path));
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(ss >> name >> rows >> cols)) throw CheckpointError("malformed tensor header");
    std::vector<double> values(rows * cols);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!in || in.get() != '\n') throw CheckpointError("truncated tensor '" + name + "'");
    ckpt.tensors.emplace_back(std::move(name), Matrix(rows, cols, std::move(values)));
  }
  return ckpt;
}

void store_parameters(Checkpoint& ckpt, const ParameterStore& params, std::string_view prefix) {
  for (const Parameter& p : params) ckpt.put(std::string(prefix) + p.name, p.value);
}

void restore_parameters(const Checkpoint& ckpt, ParameterStore& params, std::string_view prefix) {
  for (Parameter& p : params) {
    const Matrix& m = ckpt.at(std::string(prefix) + p.name);
    if (!m.same_shape(p.value)) {
      throw CheckpointError("shape mismatch for parameter " + p.name + ": checkpoint " +
                            m.shape_string() + ", model " + p.value.shape_string());
    }
    p.value = m;
  }
}

}  // namespace ddgen::ad
