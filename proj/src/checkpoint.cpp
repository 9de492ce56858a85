#include "qrestore/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace qrestore {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written in native little-endian order");

namespace {

constexpr const char* kMagic = "QRCKPT";
constexpr int kVersion = 1;

std::string hash_hex(uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

struct TableEntry {
  Shape shape;
  int64_t offset = 0;
  int64_t count = 0;
};

}  // namespace

void save_checkpoint(Model& model, const std::string& path) {
  ParamList params = model.all_params();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) {
    throw CheckpointError(CheckpointErrorKind::Io,
                          "cannot open for writing: " + path);
  }
  f << kMagic << ' ' << kVersion << '\n';
  f << "config " << hash_hex(model.cfg.hash()) << '\n';
  int64_t offset = 0;
  for (const NamedTensor& p : params) {
    f << "tensor " << p.name << ' ' << p.tensor.dim();
    for (int d = 0; d < p.tensor.dim(); ++d) f << ' ' << p.tensor.size(d);
    f << ' ' << offset << ' ' << p.tensor.numel() << '\n';
    offset += p.tensor.numel();
  }
  f << "DATA\n";
  for (const NamedTensor& p : params) {
    std::span<const double> v = p.tensor.data();
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  f.flush();
  if (!f) {
    throw CheckpointError(CheckpointErrorKind::Io, "write failed: " + path);
  }
}

void load_checkpoint(Model& model, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw CheckpointError(CheckpointErrorKind::Io,
                          "cannot open checkpoint: " + path);
  }

  std::string line;
  if (!std::getline(f, line)) {
    throw CheckpointError(CheckpointErrorKind::Corrupt, "empty file");
  }
  {
    std::istringstream is(line);
    std::string magic;
    int version = -1;
    if (!(is >> magic) || magic != kMagic) {
      throw CheckpointError(CheckpointErrorKind::Corrupt,
                            "not a checkpoint file (bad magic)");
    }
    if (!(is >> version)) {
      throw CheckpointError(CheckpointErrorKind::Corrupt,
                            "missing format version");
    }
    if (version != kVersion) {
      throw CheckpointError(
          CheckpointErrorKind::Version,
          "unsupported checkpoint version " + std::to_string(version));
    }
  }

  if (!std::getline(f, line)) {
    throw CheckpointError(CheckpointErrorKind::Corrupt, "missing config line");
  }
  {
    std::istringstream is(line);
    std::string key, hex;
    if (!(is >> key >> hex) || key != "config" || hex.size() != 16) {
      throw CheckpointError(CheckpointErrorKind::Corrupt,
                            "malformed config line");
    }
    if (hex != hash_hex(model.cfg.hash())) {
      throw CheckpointError(CheckpointErrorKind::Config,
                            "checkpoint was written for a different "
                            "architecture (config hash mismatch)");
    }
  }

  std::map<std::string, TableEntry> table;
  int64_t total = 0;
  for (;;) {
    if (!std::getline(f, line)) {
      throw CheckpointError(CheckpointErrorKind::Corrupt,
                            "header ended before DATA marker");
    }
    if (line == "DATA") break;
    std::istringstream is(line);
    std::string key, name;
    int ndims = -1;
    if (!(is >> key >> name >> ndims) || key != "tensor" || ndims < 0 ||
        ndims > 8) {
      throw CheckpointError(CheckpointErrorKind::Corrupt,
                            "malformed tensor line: " + line);
    }
    TableEntry e;
    e.shape.resize(ndims);
    for (int d = 0; d < ndims; ++d) {
      if (!(is >> e.shape[d]) || e.shape[d] <= 0) {
        throw CheckpointError(CheckpointErrorKind::Corrupt,
                              "malformed dims in: " + line);
      }
    }
    if (!(is >> e.offset >> e.count) || e.offset < 0 ||
        e.count != shape_numel(e.shape)) {
      throw CheckpointError(CheckpointErrorKind::Corrupt,
                            "inconsistent offset/count in: " + line);
    }
    if (!table.emplace(name, e).second) {
      throw CheckpointError(CheckpointErrorKind::Corrupt,
                            "duplicate tensor name: " + name);
    }
    total = std::max(total, e.offset + e.count);
  }

  std::vector<double> blob(static_cast<size_t>(total));
  f.read(reinterpret_cast<char*>(blob.data()),
         static_cast<std::streamsize>(blob.size() * sizeof(double)));
  if (f.gcount() !=
      static_cast<std::streamsize>(blob.size() * sizeof(double))) {
    throw CheckpointError(CheckpointErrorKind::Corrupt,
                          "data section truncated");
  }
  f.peek();
  if (!f.eof()) {
    throw CheckpointError(CheckpointErrorKind::Corrupt,
                          "trailing bytes after data section");
  }

  ParamList params = model.all_params();
  if (params.size() != table.size()) {
    throw CheckpointError(
        CheckpointErrorKind::Shape,
        "tensor count mismatch: model has " + std::to_string(params.size()) +
            ", file has " + std::to_string(table.size()));
  }
  for (NamedTensor& p : params) {
    auto it = table.find(p.name);
    if (it == table.end()) {
      throw CheckpointError(CheckpointErrorKind::Shape,
                            "tensor missing from checkpoint: " + p.name);
    }
    const TableEntry& e = it->second;
    if (e.shape != p.tensor.shape()) {
      throw CheckpointError(CheckpointErrorKind::Shape,
                            "shape mismatch for " + p.name + ": expected " +
                                shape_str(p.tensor.shape()) + ", file has " +
                                shape_str(e.shape));
    }
    if (e.offset + e.count > total) {
      throw CheckpointError(CheckpointErrorKind::Corrupt,
                            "offset out of range for " + p.name);
    }
    std::span<double> dst = p.tensor.data_mut();
    std::copy(blob.begin() + e.offset, blob.begin() + e.offset + e.count,
              dst.begin());
  }
}

}  // namespace qrestore
