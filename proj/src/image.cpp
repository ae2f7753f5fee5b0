#include "epinet/image.hpp"

#include <fstream>

#include "epinet/error.hpp"

namespace epinet {

Image make_image(int width, int height, int channels, uint8_t fill) {
  if (width < 1 || height < 1 || (channels != 1 && channels != 3))
    throw Error("cli", "image", "bad image geometry");
  Image img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.pixels.assign(static_cast<size_t>(width) * height * channels, fill);
  return img;
}

namespace {

int read_pnm_int(std::istream& in) {
  // skips whitespace and '#' comment lines per the PNM grammar
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) throw Error("cli", "pnm", "malformed PNM header");
  int v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    c = in.get();
  }
  return v;
}

}  // namespace

Image read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cli", "io", "cannot open " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  int channels = 0;
  if (m0 == 'P' && m1 == '6')
    channels = 3;
  else if (m0 == 'P' && m1 == '5')
    channels = 1;
  else
    throw Error("cli", "pnm", "unsupported PNM magic in " + path + " (need P5 or P6)");
  const int w = read_pnm_int(in);
  const int h = read_pnm_int(in);
  const int maxval = read_pnm_int(in);
  if (maxval != 255) throw Error("cli", "pnm", "only maxval 255 supported");
  Image img = make_image(w, h, channels);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw Error("cli", "pnm", "truncated pixel data in " + path);
  return img;
}

void write_pnm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cli", "io", "cannot write " + path);
  out << (img.channels == 3 ? "P6" : "P5") << "\n"
      << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw Error("cli", "io", "short write to " + path);
}

}  // namespace epinet
