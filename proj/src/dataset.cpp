#include "igds/dataset.hpp"

#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "igds/error.hpp"

namespace igds {
namespace {

std::string format_real(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i > 0) out += ",";
    out += std::to_string(seeds[i]);
  }
  return out;
}

std::vector<std::uint64_t> split_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(std::stoull(item));
  }
  return out;
}

}  // namespace

std::array<double, 2> MixtureSpec::class_mean(std::size_t c) const {
  std::array<double, 2> m{0.0, 0.0};
  for (const auto& mode : mode_centers.at(c)) {
    m[0] += mode[0];
    m[1] += mode[1];
  }
  const double n = static_cast<double>(mode_centers.at(c).size());
  return {m[0] / n, m[1] / n};
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t y : labels) ++counts.at(y);
  return counts;
}

void LabeledDataset::validate() const {
  if (samples.rank() != 2) throw StructuralError("dataset samples must be a matrix");
  if (samples.dim(0) != labels.size()) throw StructuralError("dataset: sample/label count mismatch");
  for (std::size_t y : labels) {
    if (y >= num_classes) throw StructuralError("dataset: label " + std::to_string(y) + " out of range");
  }
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& indices) const {
  LabeledDataset out;
  out.num_classes = num_classes;
  out.mixture = mixture;
  const std::size_t d = dim();
  out.samples = nd::Tensor(nd::Shape{indices.size(), d});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = samples.row(indices.at(i));
    std::copy(src.begin(), src.end(), out.samples.row(i).begin());
    out.labels.push_back(labels.at(indices[i]));
  }
  return out;
}

void write_dataset(std::ostream& out, const LabeledDataset& data, const std::map<std::string, std::string>& provenance) {
  data.validate();
  out << data.size() << ' ' << data.dim() << ' ' << data.num_classes << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.samples.row(i)) out << format_real(v) << ' ';
    out << data.labels[i] << '\n';
  }
  for (const auto& [key, value] : provenance) out << key << '=' << value << '\n';
}

LabeledDataset read_dataset(std::istream& in, std::map<std::string, std::string>* provenance) {
  std::size_t n = 0, d = 0, c = 0;
  if (!(in >> n >> d >> c)) throw StructuralError("dataset file: missing `n d C` header");
  LabeledDataset data;
  data.num_classes = c;
  data.samples = nd::Tensor(nd::Shape{n, d});
  data.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (!(in >> data.samples.at(i, j))) {
        throw StructuralError("dataset file: row " + std::to_string(i + 1) + " is truncated");
      }
    }
    long long label = -1;
    if (!(in >> label) || label < 0) throw StructuralError("dataset file: bad label on row " + std::to_string(i + 1));
    data.labels[i] = static_cast<std::size_t>(label);
  }
  data.validate();
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw StructuralError("dataset file: bad provenance line '" + line + "'");
    if (provenance) (*provenance)[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return data;
}

void write_distilled(std::ostream& out, const DistilledSet& set) {
  const auto& p = set.provenance;
  write_dataset(out, set.data,
                {{"beta", format_real(p.beta)},
                 {"eta", format_real(p.eta)},
                 {"ipc", std::to_string(p.ipc)},
                 {"seeds", join_seeds(p.seeds)},
                 {"generator", p.generator}});
}

DistilledSet read_distilled(std::istream& in) {
  std::map<std::string, std::string> kv;
  DistilledSet set;
  set.data = read_dataset(in, &kv);
  try {
    set.provenance.beta = std::stod(kv.at("beta"));
    set.provenance.eta = std::stod(kv.at("eta"));
    set.provenance.ipc = std::stoull(kv.at("ipc"));
    set.provenance.seeds = split_seeds(kv.at("seeds"));
    set.provenance.generator = kv.at("generator");
  } catch (const std::out_of_range&) {
    throw StructuralError("distilled set file: incomplete provenance block");
  }
  for (std::size_t count : set.data.class_counts()) {
    if (count != set.provenance.ipc) throw StructuralError("distilled set file: class count differs from ipc");
  }
  return set;
}

MixtureSpec make_mixture(std::size_t classes, std::size_t modes_per_class, double separation, Rng& rng,
                         double mode_offset, double mode_std) {
  if (classes < 2) throw StructuralError("make_mixture: need at least 2 classes");
  if (modes_per_class < 1) throw StructuralError("make_mixture: need at least 1 mode per class");
  MixtureSpec spec;
  spec.classes = classes;
  spec.modes_per_class = modes_per_class;
  spec.separation = separation;
  spec.mode_offset = mode_offset;
  spec.mode_std = mode_std;
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t c = 0; c < classes; ++c) {
    const double angle = two_pi * static_cast<double>(c) / static_cast<double>(classes);
    const double cx = separation * std::cos(angle);
    const double cy = separation * std::sin(angle);
    std::vector<std::array<double, 2>> modes;
    if (modes_per_class == 1) {
      modes.push_back({cx, cy});
    } else {
      const double phase = rng.uniform(0.0, two_pi);
      for (std::size_t m = 0; m < modes_per_class; ++m) {
        const double a = phase + two_pi * static_cast<double>(m) / static_cast<double>(modes_per_class);
        modes.push_back({cx + mode_offset * std::cos(a), cy + mode_offset * std::sin(a)});
      }
    }
    spec.mode_centers.push_back(std::move(modes));
  }
  return spec;
}

LabeledDataset sample_mixture(const MixtureSpec& spec, std::size_t n_per_class, Rng& rng) {
  LabeledDataset data;
  data.num_classes = spec.classes;
  data.mixture = spec;
  data.samples = nd::Tensor(nd::Shape{spec.classes * n_per_class, 2});
  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    const auto& modes = spec.mode_centers.at(c);
    for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
      const auto& mode = modes[modes.size() == 1 ? 0 : rng.index(modes.size())];
      data.samples.at(row, 0) = mode[0] + spec.mode_std * rng.normal();
      data.samples.at(row, 1) = mode[1] + spec.mode_std * rng.normal();
      data.labels.push_back(c);
    }
  }
  return data;
}

LabeledDataset make_synthetic_dataset(std::size_t classes, std::size_t modes_per_class, std::size_t n_per_class,
                                      double separation, Rng& rng) {
  const MixtureSpec spec = make_mixture(classes, modes_per_class, separation, rng);
  return sample_mixture(spec, n_per_class, rng);
}

}  // namespace igds
