#include "smoothlab/sharing.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "smoothlab/format.hpp"

namespace smoothlab {

void ShareConfig::validate() const {
  if (!(1 <= start && start <= end && end <= layers)) {
    throw std::invalid_argument("share range " + std::to_string(start) + ".." +
                                std::to_string(end) + " invalid for " +
                                std::to_string(layers) + " layers");
  }
}

std::string ShareConfig::label() const {
  return std::to_string(start) + "-" + std::to_string(end);
}

ShareConfig parse_share_range(std::string_view text, std::size_t layers) {
  std::size_t sep = text.find("..");
  std::size_t skip = 2;
  if (sep == std::string_view::npos) {
    sep = text.find('-');
    skip = 1;
  }
  if (sep == std::string_view::npos || sep == 0 || sep + skip >= text.size()) {
    throw std::invalid_argument("share range must look like a..b, got '" +
                                std::string(text) + "'");
  }
  auto to_index = [&](std::string_view part) {
    std::size_t v = 0;
    auto res = std::from_chars(part.data(), part.data() + part.size(), v);
    if (res.ec != std::errc{} || res.ptr != part.data() + part.size()) {
      throw std::invalid_argument("share range bound '" + std::string(part) +
                                  "' is not a layer index");
    }
    return v;
  };
  ShareConfig c{to_index(text.substr(0, sep)), to_index(text.substr(sep + skip)),
                layers};
  c.validate();
  return c;
}

std::vector<std::size_t> identity_sources(std::size_t layers) {
  std::vector<std::size_t> m(layers);
  for (std::size_t l = 0; l < layers; ++l) m[l] = l + 1;
  return m;
}

std::vector<std::size_t> share_sources(const ShareConfig& c) {
  c.validate();
  auto m = identity_sources(c.layers);
  const std::size_t source = c.start > 1 ? c.start - 1 : c.start;
  for (std::size_t l = c.start; l <= c.end; ++l) m[l - 1] = source;
  return m;
}

void validate_share_map(const std::vector<std::size_t>& sources) {
  for (std::size_t l = 1; l <= sources.size(); ++l) {
    const std::size_t src = sources[l - 1];
    if (src < 1 || src > l) {
      throw std::invalid_argument("share map: layer " + std::to_string(l) +
                                  " cannot read attention from layer " +
                                  std::to_string(src));
    }
    if (sources[src - 1] != src) {
      throw std::invalid_argument("share map: source layer " +
                                  std::to_string(src) +
                                  " does not compute its own attention");
    }
  }
}

FlopReport flops_self_attention(std::size_t layers, std::size_t n, std::size_t d,
                                const std::optional<ShareConfig>& share) {
  if (layers == 0 || n == 0 || d == 0) {
    throw std::invalid_argument("flops_self_attention: dimensions must be positive");
  }
  const auto sources = share ? share_sources(*share) : identity_sources(layers);
  if (sources.size() != layers) {
    throw std::invalid_argument("flops_self_attention: share config layer count differs");
  }
  const std::uint64_t nd2 = static_cast<std::uint64_t>(n) * d * d;
  FlopReport r;
  r.per_layer.resize(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    r.per_layer[l] = sources[l] == l + 1 ? 3 * nd2 : nd2;
    r.total += r.per_layer[l];
  }
  const std::uint64_t baseline = 3 * nd2 * layers;
  r.saved_fraction = 1.0 - static_cast<double>(r.total) / static_cast<double>(baseline);
  return r;
}

std::string two_significant(double value) {
  if (value == 0.0) return "0.0";
  int magnitude = static_cast<int>(std::floor(std::log10(std::abs(value))));
  const double unit = std::pow(10.0, magnitude - 1);
  const double rounded = std::round(value / unit) * unit;
  // 9.96 rounds up into the next decade.
  if (std::abs(rounded) >= std::pow(10.0, magnitude + 1)) ++magnitude;
  return format_fixed(rounded, std::max(0, 1 - magnitude));
}

std::vector<FlopRow> flops_table(std::size_t n, std::size_t d, std::size_t layers,
                                 const std::vector<std::optional<ShareConfig>>& ranges) {
  std::vector<FlopRow> rows;
  rows.reserve(ranges.size());
  for (const auto& range : ranges) {
    FlopRow row;
    row.label = range ? range->label() : "none";
    row.report = flops_self_attention(layers, n, d, range);
    row.giga = two_significant(static_cast<double>(row.report.total) / 1e9);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string render_flops_tsv(const std::vector<FlopRow>& rows) {
  std::ostringstream out;
  out << "share\tflops\tflops_g\tsaved_fraction\n";
  for (const auto& r : rows) {
    out << r.label << '\t' << r.report.total << '\t' << r.giga << '\t'
        << format_fixed(r.report.saved_fraction, 4) << '\n';
  }
  return out.str();
}

std::string render_flops_text(const std::vector<FlopRow>& rows) {
  std::ostringstream out;
  auto pad = [](const std::string& s, std::size_t w) {
    return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
  };
  out << pad("share", 8) << pad("FLOPs", 16) << pad("G", 6) << pad("saved", 9)
      << '\n';
  for (const auto& r : rows) {
    out << pad(r.label, 8) << pad(std::to_string(r.report.total), 16)
        << pad(r.giga + "G", 6)
        << pad(format_fixed(100.0 * r.report.saved_fraction, 1) + "%", 9) << '\n';
  }
  return out.str();
}

}  // namespace smoothlab
