#include "otwb/error.hpp"
#include "otwb/instances.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace otwb {

namespace {

// Reads the next whitespace-separated PGM header token, skipping '#' comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

long pgm_int(std::istream& in, const std::string& path) {
  const std::string tok = pgm_token(in);
  try {
    std::size_t used = 0;
    const long v = std::stol(tok, &used);
    if (used != tok.size() || v < 0) throw std::invalid_argument(tok);
    return v;
  } catch (const std::logic_error&) {
    throw ParseError(path + ": bad PGM header token '" + tok + "'");
  }
}

Matrix load_pgm(std::istream& in, const std::string& path, bool binary) {
  const long w = pgm_int(in, path), h = pgm_int(in, path), maxval = pgm_int(in, path);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
    throw ParseError(path + ": bad PGM dimensions or maxval");
  }
  Matrix img(h, w);
  for (long i = 0; i < h; ++i) {
    for (long j = 0; j < w; ++j) {
      long v;
      if (binary) {
        int hi = in.get();
        if (hi == EOF) throw ParseError(path + ": truncated PGM data");
        v = hi;
        if (maxval > 255) {
          const int lo = in.get();
          if (lo == EOF) throw ParseError(path + ": truncated PGM data");
          v = (v << 8) | lo;
        }
      } else {
        v = pgm_int(in, path);
      }
      img(i, j) = static_cast<double>(v);
    }
  }
  return img;
}

Matrix load_csv(std::istream& in, const std::string& path) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t\r", used) != std::string::npos) {
          throw std::invalid_argument(cell);
        }
      } catch (const std::logic_error&) {
        throw ParseError(path + ": line " + std::to_string(line_no) + ": bad number '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": ragged row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path + ": empty CSV image");
  Matrix img(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      img(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    }
  }
  return img;
}

}  // namespace

Matrix load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open image " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  Matrix img;
  if (in.gcount() == 2 && magic[0] == 'P' && (magic[1] == '2' || magic[1] == '5')) {
    img = load_pgm(in, path.string(), magic[1] == '5');
  } else {
    in.clear();
    in.seekg(0);
    img = load_csv(in, path.string());
  }
  if (!img.allFinite() || (img.array() < 0.0).any()) {
    throw InvalidInstance(path.string() + ": image intensities must be finite and nonnegative");
  }
  return img;
}

}  // namespace otwb
