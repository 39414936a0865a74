#include "fedgmc/persist.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

#include "fedgmc/errors.hpp"

namespace fedgmc {

namespace {

constexpr const char* kMagic = "fedgmc-params";
constexpr int kVersion = 1;

void write_values(std::ostream& out, const Matrix& m) {
  char buf[64];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), m(r, c));
      if (c) out << ' ';
      out.write(buf, end - buf);
    }
    out << '\n';
  }
}

void read_values(std::istream& in, Matrix& m, const std::string& what) {
  std::string tok;
  for (double& x : m.data()) {
    if (!(in >> tok)) throw FormatError("params: truncated while reading " + what);
    auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
    if (ec != std::errc() || end != tok.data() + tok.size()) {
      throw FormatError("params: bad value '" + tok + "' in " + what);
    }
  }
}

}  // namespace

void save_params(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << kMagic << ' ' << kVersion << '\n'
      << params.input_dim() << ' ' << params.embed_dim() << ' ' << params.num_classes() << '\n';
  write_values(out, params.w_ego);
  write_values(out, params.w_cls);
  write_values(out, Matrix(1, params.b_cls.size(), params.b_cls));
  out << "end\n";
  if (!out) throw IoError("write failed for " + path.string());
}

ModelParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kMagic) throw FormatError("params: " + path.string() + " has no header");
  if (version != kVersion) {
    throw FormatError("params: unsupported version " + std::to_string(version) + " in " + path.string());
  }
  std::size_t d0 = 0, d = 0, c = 0;
  if (!(in >> d0 >> d >> c) || d0 == 0 || d == 0 || c == 0 || d0 > 1'000'000 || d > 100'000 || c > 100'000) {
    throw FormatError("params: bad dims line in " + path.string());
  }
  ModelParams p = ModelParams::zeros(d0, d, c);
  read_values(in, p.w_ego, "w_ego");
  read_values(in, p.w_cls, "w_cls");
  Matrix b(1, c);
  read_values(in, b, "b_cls");
  p.b_cls = b.data();
  std::string trailer;
  if (!(in >> trailer) || trailer != "end") throw FormatError("params: missing end marker in " + path.string());
  if (in >> trailer) throw FormatError("params: trailing data in " + path.string());
  return p;
}

}  // namespace fedgmc
