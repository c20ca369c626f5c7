#include "dynanet/sweep.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "dynanet/nn.hpp"

namespace dynanet {

void GridSpec::validate(std::size_t blocks, std::size_t cap) const {
  if (values.size() != blocks) {
    throw UsageError("grid has " + std::to_string(values.size()) + " per-block lists, network has " +
                     std::to_string(blocks) + " tuning-blocks");
  }
  double combos = 1.0;
  for (const auto& v : values) {
    if (v.empty()) throw UsageError("grid lists must be non-empty");
    for (double a : v) {
      if (!std::isfinite(a)) throw UsageError("grid alpha values must be finite");
    }
    combos *= static_cast<double>(v.size());
  }
  if (combos > static_cast<double>(cap)) {
    throw UsageError("grid has " + std::to_string(static_cast<std::uint64_t>(combos)) +
                     " combinations, above the cap of " + std::to_string(cap));
  }
}

std::vector<SweepRecord> pareto_front(const std::vector<SweepRecord>& records) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (records[a].content() != records[b].content()) return records[a].content() < records[b].content();
    return records[a].style() < records[b].style();
  });
  std::vector<bool> keep(records.size(), false);
  double best_before = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < order.size();) {
    // Group of equal content; its first member has the group's minimum style.
    std::size_t end = g;
    const double content = records[order[g]].content();
    while (end < order.size() && records[order[end]].content() == content) ++end;
    const double group_min = records[order[g]].style();
    if (group_min < best_before) {
      for (std::size_t k = g; k < end && records[order[k]].style() == group_min; ++k) keep[order[k]] = true;
      best_before = group_min;
    }
    g = end;
  }
  std::vector<SweepRecord> front;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (keep[i]) front.push_back(records[i]);
  }
  return front;
}

bool weakly_dominates(const std::vector<SweepRecord>& a, const std::vector<SweepRecord>& b) {
  for (const auto& q : b) {
    const bool covered = std::any_of(a.begin(), a.end(), [&](const SweepRecord& p) {
      return p.content() <= q.content() && p.style() <= q.style();
    });
    if (!covered) return false;
  }
  return true;
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

double parse_number(const std::string& s, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw FormatError("CSV line " + std::to_string(line) + ": bad number '" + s + "'", 0);
  }
  return v;
}

}  // namespace

std::string format_csv(const std::vector<SweepRecord>& records) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& r : records) {
    if (r.alpha.size() != 0 && r.alpha.size() != 3) {
      throw UsageError("CSV export expects 3 alpha values per record, got " + std::to_string(r.alpha.size()));
    }
    for (std::size_t l = 0; l < 3; ++l) {
      if (r.alpha.size() == 3) out += format_number(r.alpha[l]);
      out += ',';
    }
    out += format_number(r.content()) + ',' + format_number(r.style()) + ',' + format_number(r.total_at_lambda) + ',' +
           csv_field(r.image_id) + '\n';
  }
  return out;
}

std::vector<SweepRecord> parse_csv(std::string_view text) {
  std::vector<SweepRecord> records;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line_no == 1) {
      if (line != kCsvHeader) throw FormatError("unexpected CSV header", 0);
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 7) throw FormatError("CSV line " + std::to_string(line_no) + ": expected 7 fields", 0);
    SweepRecord r;
    if (!f[0].empty() || !f[1].empty() || !f[2].empty()) {
      for (std::size_t l = 0; l < 3; ++l) r.alpha.values.push_back(parse_number(f[l], line_no));
    }
    r.losses = {parse_number(f[3], line_no), parse_number(f[4], line_no)};
    r.total_at_lambda = parse_number(f[5], line_no);
    r.image_id = f[6];
    records.push_back(std::move(r));
  }
  if (line_no == 0) throw FormatError("empty CSV document", 0);
  return records;
}

void export_csv(const std::vector<SweepRecord>& records, const std::string& path) {
  write_file(path, format_csv(records));
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw UsageError("spearman needs two equal-length series of length >= 2");
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace dynanet
