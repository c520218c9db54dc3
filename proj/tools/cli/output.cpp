#include "output.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace covtest::cli {

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  std::array<char, 17> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + 16, value, 16);
  std::string s(buf.data(), end);
  return std::string(16 - s.size(), '0') + s;
}

std::string format_double(double value) {
  std::array<char, 32> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), end);
}

std::string csv_field(std::string_view value) {
  if (value.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(value);
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

namespace {

// Fixed-precision coordinates keep the SVG diffable.
std::string coord(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << v;
  return os.str();
}

std::string escape_xml(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

double nice_step(double span) {
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    if (m * mag >= raw) return m * mag;
  }
  return 10.0 * mag;
}

}  // namespace

std::string render_power_svg(const PowerCurve& curve, std::string_view title,
                             std::string_view metadata) {
  constexpr double kWidth = 640, kHeight = 440;
  constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 60;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  double x_max = 0.0;
  for (const auto& pt : curve.points) x_max = std::max(x_max, pt.frobenius);
  if (!(x_max > 0.0)) x_max = 1.0;
  const double step = nice_step(x_max);
  x_max = std::ceil(x_max / step - 1e-9) * step;

  const auto sx = [&](double x) { return kLeft + plot_w * x / x_max; };
  const auto sy = [&](double y) { return kTop + plot_h * (1.0 - y); };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << kWidth
     << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
     << "<metadata><![CDATA[" << metadata << "]]></metadata>\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << coord(kLeft + plot_w / 2) << "\" y=\"24\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"15\">" << escape_xml(title) << "</text>\n";

  // Axes, ticks and grid.
  os << "<g stroke=\"black\" stroke-width=\"1\" fill=\"none\">\n"
     << "<line x1=\"" << coord(kLeft) << "\" y1=\"" << coord(sy(0)) << "\" x2=\""
     << coord(kLeft + plot_w) << "\" y2=\"" << coord(sy(0)) << "\"/>\n"
     << "<line x1=\"" << coord(kLeft) << "\" y1=\"" << coord(sy(0)) << "\" x2=\""
     << coord(kLeft) << "\" y2=\"" << coord(sy(1)) << "\"/>\n</g>\n";
  os << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"black\">\n";
  for (int i = 0; step * i <= x_max + 1e-12; ++i) {
    const double x = step * i;
    os << "<line x1=\"" << coord(sx(x)) << "\" y1=\"" << coord(sy(0)) << "\" x2=\""
       << coord(sx(x)) << "\" y2=\"" << coord(sy(0) + 5) << "\" stroke=\"black\"/>\n"
       << "<text x=\"" << coord(sx(x)) << "\" y=\"" << coord(sy(0) + 18)
       << "\" text-anchor=\"middle\">" << format_double(std::round(x * 1e6) / 1e6) << "</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    const double y = 0.2 * i;
    os << "<line x1=\"" << coord(kLeft - 5) << "\" y1=\"" << coord(sy(y)) << "\" x2=\""
       << coord(kLeft + plot_w) << "\" y2=\"" << coord(sy(y)) << "\" stroke=\""
       << (i == 0 ? "black" : "#dddddd") << "\"/>\n"
       << "<text x=\"" << coord(kLeft - 8) << "\" y=\"" << coord(sy(y) + 4)
       << "\" text-anchor=\"end\">" << format_double(std::round(y * 10) / 10) << "</text>\n";
  }
  os << "<text x=\"" << coord(kLeft + plot_w / 2) << "\" y=\"" << coord(kHeight - 18)
     << "\" text-anchor=\"middle\" font-size=\"13\">‖Σ−I‖_F</text>\n"
     << "<text x=\"18\" y=\"" << coord(kTop + plot_h / 2) << "\" text-anchor=\"middle\" "
     << "font-size=\"13\" transform=\"rotate(-90 18 " << coord(kTop + plot_h / 2)
     << ")\">power</text>\n</g>\n";

  for (std::size_t s = 0; s < curve.statistics.size(); ++s) {
    const bool clr = curve.statistics[s] == Statistic::CLR;
    const char* colour = clr ? "#c0392b" : "#1f4e9c";
    const char* dash = clr ? " stroke-dasharray=\"7 4\"" : "";
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\"" << dash
       << " points=\"";
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
      if (i) os << ' ';
      os << coord(sx(curve.points[i].frobenius)) << ','
         << coord(sy(curve.points[i].estimates[s].estimate));
    }
    os << "\"/>\n";
    for (const auto& pt : curve.points) {
      os << "<circle cx=\"" << coord(sx(pt.frobenius)) << "\" cy=\""
         << coord(sy(pt.estimates[s].estimate)) << "\" r=\"2.5\" fill=\"" << colour << "\"/>\n";
    }
    const double ly = kTop + 20 + 22 * static_cast<double>(s);
    os << "<line x1=\"" << coord(kLeft + plot_w + 15) << "\" y1=\"" << coord(ly) << "\" x2=\""
       << coord(kLeft + plot_w + 50) << "\" y2=\"" << coord(ly) << "\" stroke=\"" << colour
       << "\" stroke-width=\"2\"" << dash << "/>\n"
       << "<text x=\"" << coord(kLeft + plot_w + 56) << "\" y=\"" << coord(ly + 4)
       << "\" font-family=\"sans-serif\" font-size=\"12\">"
       << (clr ? "CLRT" : "ψ (T_n)") << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

}  // namespace covtest::cli
