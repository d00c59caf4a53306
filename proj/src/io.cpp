#include "agpolab/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "agpolab/error.hpp"

namespace agpolab {

std::string format_sig(double v, int sig) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", sig, v);
  return buf;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io, "cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), Errc::io, "cannot write file: " + path.string());
  out << content;
  require(out.good(), Errc::io, "write failed: " + path.string());
}

}  // namespace agpolab
