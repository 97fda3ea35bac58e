#pragma once

// Figures from run directories: SVG loss curves and Dice-vs-iteration per run
// log, and one PNG panel per evaluation report (target input, x^{S->T} of the
// paired source case, prediction, ground truth). Output bytes depend only on
// the inputs and the plot seed.

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "synthmix/checkpoint.hpp"
#include "synthmix/dataio.hpp"
#include "synthmix/gan_core.hpp"
#include "synthmix/trainer.hpp"

namespace synthmix {

namespace plot_detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline constexpr std::array<const char*, 8> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                                        "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f"};

struct Series {
  std::string name;
  std::vector<double> x, y;
};

/// Trailing moving average with a window of `w` points.
inline std::vector<double> smooth(const std::vector<double>& v, std::size_t w) {
  std::vector<double> out(v.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    acc += v[i];
    if (i >= w) acc -= v[i - w];
    out[i] = acc / static_cast<double>(std::min(i + 1, w));
  }
  return out;
}

/// One axes box at (ox, oy) of size w x h with a single polyline.
inline void panel(std::ostringstream& os, const Series& s, double ox, double oy, double w, double h,
                  const char* colour) {
  const double ml = 48, mr = 8, mt = 20, mb = 22;
  const double pw = w - ml - mr, ph = h - mt - mb;
  os << "<g>\n<text x=\"" << num(ox + ml) << "\" y=\"" << num(oy + 14) << "\" font-size=\"12\">" << s.name
     << "</text>\n";
  os << "<rect x=\"" << num(ox + ml) << "\" y=\"" << num(oy + mt) << "\" width=\"" << num(pw) << "\" height=\""
     << num(ph) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  if (!s.x.empty()) {
    auto [xmin_it, xmax_it] = std::minmax_element(s.x.begin(), s.x.end());
    auto [ymin_it, ymax_it] = std::minmax_element(s.y.begin(), s.y.end());
    const double x0 = *xmin_it, x1 = *xmax_it > *xmin_it ? *xmax_it : *xmin_it + 1.0;
    const double y0 = *ymin_it, y1 = *ymax_it > *ymin_it ? *ymax_it : *ymin_it + 1.0;
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double px = ox + ml + (s.x[i] - x0) / (x1 - x0) * pw;
      const double py = oy + mt + ph - (s.y[i] - y0) / (y1 - y0) * ph;
      os << (i ? " " : "") << num(px) << ',' << num(py);
    }
    os << "\"/>\n";
    os << "<text x=\"" << num(ox + ml - 4) << "\" y=\"" << num(oy + mt + 10) << "\" font-size=\"9\" text-anchor=\"end\">"
       << label(y1) << "</text>\n";
    os << "<text x=\"" << num(ox + ml - 4) << "\" y=\"" << num(oy + mt + ph) << "\" font-size=\"9\" text-anchor=\"end\">"
       << label(y0) << "</text>\n";
    os << "<text x=\"" << num(ox + ml) << "\" y=\"" << num(oy + h - 6) << "\" font-size=\"9\">" << label(x0)
       << "</text>\n";
    os << "<text x=\"" << num(ox + ml + pw) << "\" y=\"" << num(oy + h - 6)
       << "\" font-size=\"9\" text-anchor=\"end\">" << label(x1) << "</text>\n";
  }
  os << "</g>\n";
}

/// Small multiples, three per row.
inline std::string svg_grid(const std::vector<Series>& series, const std::string& title) {
  const int cols = 3;
  const double w = 320, h = 200;
  const int rows = static_cast<int>((series.size() + cols - 1) / cols);
  const double W = w * cols, H = 30 + h * rows;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(W) << "\" height=\"" << num(H)
     << "\" viewBox=\"0 0 " << num(W) << ' ' << num(H) << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"8\" y=\"20\" font-size=\"14\">" << title << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double ox = static_cast<double>(i % cols) * w;
    const double oy = 30 + static_cast<double>(i / cols) * h;
    panel(os, series[i], ox, oy, w, h, kPalette[i % kPalette.size()]);
  }
  os << "</svg>\n";
  return os.str();
}

inline void png_sink(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<unsigned char>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

inline void png_flush(png_structp) {}

/// RGB8 row-major image encoded as PNG bytes.
inline std::vector<unsigned char> encode_png(const std::vector<unsigned char>& rgb, int w, int h) {
  detail::require<DataError>(rgb.size() == static_cast<std::size_t>(w) * h * 3, "png: buffer size mismatch");
  std::vector<unsigned char> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("png: cannot allocate encoder");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("png: encoding failed");
  }
  png_set_write_fn(png, &out, png_sink, png_flush);
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y) {
    png_write_row(png, const_cast<png_bytep>(rgb.data() + static_cast<std::size_t>(y) * w * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

inline std::array<unsigned char, 3> class_colour(int c) {
  static constexpr std::array<std::array<unsigned char, 3>, 5> lut = {
      {{0, 0, 0}, {230, 80, 60}, {60, 180, 90}, {70, 110, 230}, {240, 200, 40}}};
  return lut[static_cast<std::size_t>(c) % lut.size()];
}

inline unsigned char grey(float v) {
  return static_cast<unsigned char>(std::lround(std::clamp((v + 1.0f) * 0.5f, 0.0f, 1.0f) * 255.0f));
}

/// Name for a file found under `root`: its parent path relative to root with
/// separators replaced by '_', or "run" at the root itself.
inline std::string run_name(const std::filesystem::path& root, const std::filesystem::path& file) {
  const auto rel = std::filesystem::relative(file.parent_path(), root).generic_string();
  if (rel.empty() || rel == ".") return "run";
  std::string s = rel;
  std::replace(s.begin(), s.end(), '/', '_');
  return s;
}

}  // namespace plot_detail

/// Loss curves (smoothed) and Dice-vs-iteration, as two SVG documents.
inline std::pair<std::string, std::string> render_run_svgs(const RunLog& log, const std::string& name) {
  detail::require<DataError>(!log.iterations.empty() || !log.evals.empty(), "empty run log for '" + name + "'");
  std::map<std::string, plot_detail::Series> by_key;
  for (const auto& it : log.iterations) {
    for (const auto& [k, v] : it.losses) {
      auto& s = by_key[k];
      s.name = k;
      s.x.push_back(static_cast<double>(it.iteration));
      s.y.push_back(v);
    }
  }
  std::vector<plot_detail::Series> losses;
  for (auto& [k, s] : by_key) {
    s.y = plot_detail::smooth(s.y, std::max<std::size_t>(1, s.y.size() / 50));
    losses.push_back(std::move(s));
  }
  plot_detail::Series dice{"target test Dice", {}, {}};
  for (const auto& e : log.evals) {
    dice.x.push_back(static_cast<double>(e.iteration));
    dice.y.push_back(e.mean_dice);
  }
  return {plot_detail::svg_grid(losses, name + ": training losses"),
          plot_detail::svg_grid({dice}, name + ": Dice vs iteration")};
}

/// Four tiles side by side: target input, x^{S->T} of the paired source
/// case, predicted labels, ground truth labels.
inline std::vector<unsigned char> render_panel_png(const EvalReport& report, std::uint64_t seed) {
  const auto& prov = report.provenance;
  detail::require<DataError>(prov.contains("checkpoint") && prov.contains("dataset"),
                             "report has no checkpoint/dataset provenance to render a panel from");
  const Checkpoint ck = load_checkpoint(prov.at("checkpoint").get<std::string>());
  const DatasetManifest data = load_manifest(prov.at("dataset").get<std::string>());
  ModelBundle<float> model(ck.model, 0);
  restore_params(model.all_params(), ck);

  const auto targets = data.select(Domain::Target, Split::Test);
  const auto sources = data.select(Domain::Source, Split::Test);
  detail::require<DataError>(!targets.empty() && targets.size() == sources.size(), "dataset has no paired test split");
  CounterRng rng(seed, streams::kPlot);
  const std::size_t pick = static_cast<std::size_t>(rng() % targets.size());
  const Sample tgt = load_sample(data, targets[pick]->id);
  const Sample src = load_sample(data, sources[pick]->id);
  detail::require<DataError>(tgt.seg_label.has_value(), "target test sample has no ground truth");

  Tensor<float> fake;
  {
    ag::NoGradGuard guard;
    fake = translate(model, src.image, Direction::S2T).value();
  }
  const LabelMap pred = predict_labels(model.seg, tgt.image);
  const int n = tgt.side();
  const int gap = 4;
  const int W = 4 * n + 3 * gap;
  std::vector<unsigned char> rgb(static_cast<std::size_t>(W) * n * 3, 255);
  auto put = [&](int tile, int y, int x, std::array<unsigned char, 3> c) {
    const std::size_t o = (static_cast<std::size_t>(y) * W + tile * (n + gap) + x) * 3;
    rgb[o] = c[0];
    rgb[o + 1] = c[1];
    rgb[o + 2] = c[2];
  };
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const unsigned char a = plot_detail::grey(tgt.image(y, x));
      const unsigned char b = plot_detail::grey(fake(y, x));
      put(0, y, x, {a, a, a});
      put(1, y, x, {b, b, b});
      put(2, y, x, plot_detail::class_colour(pred(y, x)));
      put(3, y, x, plot_detail::class_colour((*tgt.seg_label)(y, x)));
    }
  }
  return plot_detail::encode_png(rgb, W, n);
}

struct PlotResult {
  std::vector<std::filesystem::path> files;
};

/// Scans `in` for `runlog.json` files and evaluation reports (JSON objects
/// with per-class Dice) and writes figures into `out`. Everything is rendered
/// before the first write, so a failure leaves `out` untouched.
inline PlotResult plot_directory(const std::filesystem::path& in, const std::filesystem::path& out, std::uint64_t seed) {
  namespace fs = std::filesystem;
  detail::require<DataError>(fs::is_directory(in), "plot input " + in.string() + " is not a directory");
  std::vector<fs::path> jsons;
  for (const auto& e : fs::recursive_directory_iterator(in)) {
    if (e.is_regular_file() && e.path().extension() == ".json") jsons.push_back(e.path());
  }
  std::sort(jsons.begin(), jsons.end());

  std::vector<std::pair<fs::path, std::string>> text_files;
  std::vector<std::pair<fs::path, std::vector<unsigned char>>> binary_files;
  for (const auto& p : jsons) {
    nlohmann::json j;
    {
      std::ifstream is(p);
      j = nlohmann::json::parse(is, nullptr, false);
    }
    if (j.is_discarded() || !j.is_object()) continue;
    try {
      if (p.filename() == "runlog.json") {
        const std::string name = plot_detail::run_name(in, p);
        auto [losses, dice] = render_run_svgs(run_log_from_json(j), name);
        text_files.emplace_back(out / (name + "_losses.svg"), std::move(losses));
        text_files.emplace_back(out / (name + "_dice.svg"), std::move(dice));
      } else if (j.contains("per_class_dice")) {
        std::string name = fs::relative(p, in).replace_extension().generic_string();
        std::replace(name.begin(), name.end(), '/', '_');
        binary_files.emplace_back(out / (name + "_panel.png"), render_panel_png(eval_report_from_json(j), seed));
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed " + p.string() + ": " + e.what());
    }
  }
  detail::require<DataError>(!text_files.empty() || !binary_files.empty(),
                             "no run logs or evaluation reports under " + in.string());

  fs::create_directories(out);
  PlotResult res;
  for (const auto& [path, text] : text_files) {
    detail::write_text(path, text);
    res.files.push_back(path);
  }
  for (const auto& [path, bytes] : binary_files) {
    detail::write_bytes(path, bytes.data(), bytes.size());
    res.files.push_back(path);
  }
  return res;
}

}  // namespace synthmix
