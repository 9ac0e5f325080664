#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>

#include "commands.hpp"

namespace modal::cli {

namespace {

struct Run {
  std::string name;
  std::map<std::string, double> metrics;
};

Run load_run(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
    throw Error(Errc::invalid_argument, "--run expects name=eval_dir, got '" + spec + "'");
  }
  Run r;
  r.name = spec.substr(0, eq);
  const fs::path path = fs::path(spec.substr(eq + 1)) / "summary.csv";
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(Errc::parse_error, path.string() + ": bad row");
    char* end = nullptr;
    const std::string value = line.substr(comma + 1);
    const double v = std::strtod(value.c_str(), &end);
    if (end == value.c_str()) throw Error(Errc::parse_error, path.string() + ": bad value");
    r.metrics[line.substr(0, comma)] = v;
  }
  return r;
}

std::string fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const std::pair<const char*, const char*> kColumns[] = {
    {"pq", "PQ"},          {"sq", "SQ"},       {"rq", "RQ"},     {"pq_things", "PQ_th"},
    {"pq_stuff", "PQ_st"}, {"miou", "mIoU"},   {"s_assoc", "S_assoc"},
    {"lstq", "LSTQ"},      {"membership_accuracy", "Mem. acc."}};

std::string markdown(const std::vector<Run>& runs) {
  std::string md = "| run |";
  std::string rule = "|---|";
  for (const auto& [key, title] : kColumns) {
    md += std::string(" ") + title + " |";
    rule += "---:|";
  }
  md += '\n' + rule + '\n';
  for (const auto& r : runs) {
    md += "| " + r.name + " |";
    for (const auto& [key, title] : kColumns) {
      auto it = r.metrics.find(key);
      md += ' ' + (it == r.metrics.end() ? std::string("-") : fixed(it->second, 4)) + " |";
    }
    md += '\n';
  }
  return md;
}

std::string svg_chart(const std::vector<Run>& runs) {
  std::vector<std::pair<std::string, std::string>> series = {{"pq", "PQ"}, {"lstq", "LSTQ"}};
  for (const auto& r : runs) {
    if (r.metrics.count("membership_accuracy")) {
      series.emplace_back("membership_accuracy", "membership accuracy");
      break;
    }
  }
  const char* colors[] = {"#4c72b0", "#55a868", "#c44e52"};
  const int bar = 22, gap = 30, left = 50, top = 20, plot_h = 200;
  const int group = static_cast<int>(series.size()) * bar;
  const int width = left + static_cast<int>(runs.size()) * (group + gap) + 160;
  const int height = top + plot_h + 50;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = 0.25 * t;
    const int y = top + plot_h - static_cast<int>(v * plot_h);
    svg << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << width - 160 << "\" y2=\"" << y
        << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">"
        << fixed(v, 2) << "</text>\n";
  }
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const int x0 = left + gap / 2 + static_cast<int>(r) * (group + gap);
    for (std::size_t k = 0; k < series.size(); ++k) {
      auto it = runs[r].metrics.find(series[k].first);
      if (it == runs[r].metrics.end()) continue;
      const double v = std::clamp(it->second, 0.0, 1.0);
      const double h = v * plot_h;
      svg << "<rect x=\"" << x0 + static_cast<int>(k) * bar << "\" y=\""
          << fixed(top + plot_h - h, 2) << "\" width=\"" << bar - 2 << "\" height=\""
          << fixed(h, 2) << "\" fill=\"" << colors[k] << "\"><title>" << escape(runs[r].name)
          << ' ' << series[k].second << ' ' << fixed(it->second, 4) << "</title></rect>\n";
    }
    svg << "<text x=\"" << x0 + group / 2 << "\" y=\"" << top + plot_h + 16
        << "\" text-anchor=\"middle\">" << escape(runs[r].name) << "</text>\n";
  }
  svg << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << width - 160
      << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const int y = top + 10 + static_cast<int>(k) * 18;
    svg << "<rect x=\"" << width - 150 << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"12\" fill=\""
        << colors[k] << "\"/>\n";
    svg << "<text x=\"" << width - 132 << "\" y=\"" << y + 1 << "\">" << series[k].second
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace

int cmd_report(const std::vector<std::string>& run_specs, const std::string& out_dir,
               std::ostream& out) {
  if (run_specs.empty()) throw Error(Errc::invalid_argument, "report needs at least one --run");
  std::vector<Run> runs;
  for (const auto& spec : run_specs) runs.push_back(load_run(spec));
  const auto table = markdown(runs);
  const fs::path root(out_dir);
  write_text(root / "report.md", "# Run comparison\n\n" + table +
                                     "\n![PQ, LSTQ and membership accuracy](report.svg)\n");
  write_text(root / "report.svg", svg_chart(runs));
  out << table;
  return 0;
}

}  // namespace modal::cli
