#include "gaqat/domains.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <cstdio>
#include <set>
#include <sstream>

#include "gaqat/errors.hpp"

namespace gaqat {

namespace {

// Centroid of the canonical two moons; domains rotate about it.
constexpr double kMoonsCenterX = 0.5;
constexpr double kMoonsCenterY = 0.25;

// cos/sin of an angle in degrees, exact at multiples of 90.
std::pair<double, double> rotation(double degrees) {
    double r = std::fmod(degrees, 360.0);
    if (r < 0.0) r += 360.0;
    if (r == 0.0) return {1.0, 0.0};
    if (r == 90.0) return {0.0, 1.0};
    if (r == 180.0) return {-1.0, 0.0};
    if (r == 270.0) return {0.0, -1.0};
    const double rad = r * std::numbers::pi / 180.0;
    return {std::cos(rad), std::sin(rad)};
}

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), 0x6d6f6f6eu};
    return std::mt19937_64(seq);
}

// Gathers the listed rows of several domains into one labeled set.
LabeledSet gather(const DomainDataset& data, const std::vector<std::pair<std::size_t, std::size_t>>& picks) {
    LabeledSet set;
    const std::size_t d = data.feature_dim();
    set.batch.features = Matrix(picks.size(), d);
    set.batch.labels.reserve(picks.size());
    set.ids.reserve(picks.size());
    for (std::size_t k = 0; k < picks.size(); ++k) {
        const auto [di, row] = picks[k];
        const auto src = data.domains[di].samples.row(row);
        std::copy(src.begin(), src.end(), set.batch.features.row(k).begin());
        set.batch.labels.push_back(data.domains[di].labels[row]);
        set.ids.push_back({di, row});
    }
    return set;
}

std::size_t domain_index(const DomainDataset& data, const std::string& name) {
    for (std::size_t i = 0; i < data.domains.size(); ++i)
        if (data.domains[i].name == name) return i;
    throw InputError("unknown domain '" + name + "'");
}

}  // namespace

const Domain& DomainDataset::domain(const std::string& name) const { return domains[domain_index(*this, name)]; }

std::size_t DomainDataset::feature_dim() const { return domains.empty() ? 0 : domains.front().samples.cols(); }

void DomainDataset::validate() const {
    if (domains.empty()) throw InputError("dataset has no domains");
    std::set<std::string> names;
    for (const auto& d : domains) {
        if (!names.insert(d.name).second) throw InputError("duplicate domain name '" + d.name + "'");
        if (d.samples.rows() == 0) throw InputError("domain '" + d.name + "' is empty");
        if (d.samples.cols() != feature_dim()) throw InputError("domain '" + d.name + "' has a different feature dimension");
        if (d.labels.size() != d.samples.rows()) throw InputError("domain '" + d.name + "' label count mismatch");
        for (int y : d.labels)
            if (y < 0 || y >= num_classes) throw InputError("domain '" + d.name + "' has an out-of-range label");
    }
}

DomainDataset make_rotated_moons(const std::vector<double>& angles_degrees, std::size_t n_per_domain, double noise,
                                 std::uint64_t seed) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < angles_degrees.size(); ++i) names.push_back("d" + std::to_string(i));
    return make_rotated_moons(names, angles_degrees, n_per_domain, noise, seed);
}

DomainDataset make_rotated_moons(const std::vector<std::string>& names, const std::vector<double>& angles_degrees,
                                 std::size_t n_per_domain, double noise, std::uint64_t seed) {
    if (names.size() != angles_degrees.size()) throw InputError("need one angle per domain");
    if (names.empty()) throw InputError("need at least one domain");
    if (n_per_domain == 0) throw InputError("n_per_domain must be at least 1");
    if (!(noise >= 0.0)) throw InputError("noise must be >= 0");

    const std::size_t n_outer = n_per_domain / 2;
    const std::size_t n_inner = n_per_domain - n_outer;
    auto arc = [](std::size_t k, std::size_t count) {
        return count <= 1 ? 0.0 : std::numbers::pi * static_cast<double>(k) / static_cast<double>(count - 1);
    };
    Matrix base(n_per_domain, 2);
    std::vector<int> base_labels(n_per_domain);
    for (std::size_t k = 0; k < n_outer; ++k) {
        const double t = arc(k, n_outer);
        base(k, 0) = std::cos(t) - kMoonsCenterX;
        base(k, 1) = std::sin(t) - kMoonsCenterY;
        base_labels[k] = 0;
    }
    for (std::size_t k = 0; k < n_inner; ++k) {
        const double t = arc(k, n_inner);
        base(n_outer + k, 0) = 1.0 - std::cos(t) - kMoonsCenterX;
        base(n_outer + k, 1) = 1.0 - std::sin(t) - 0.5 - kMoonsCenterY;
        base_labels[n_outer + k] = 1;
    }

    // One shuffle shared by all domains, so domains differ only by noise and angle.
    std::vector<std::size_t> order(n_per_domain);
    for (std::size_t i = 0; i < n_per_domain; ++i) order[i] = i;
    auto shuffle_rng = seeded(seed, 0xffffffffu);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    DomainDataset data;
    data.seed = seed;
    data.num_classes = 2;
    for (std::size_t di = 0; di < names.size(); ++di) {
        Domain d;
        d.name = names[di];
        d.angle_degrees = angles_degrees[di];
        d.noise = noise;
        d.samples = Matrix(n_per_domain, 2);
        d.labels.resize(n_per_domain);
        auto rng = seeded(seed, di);
        std::normal_distribution<double> gauss(0.0, 1.0);
        const auto [c, s] = rotation(angles_degrees[di]);
        for (std::size_t k = 0; k < n_per_domain; ++k) {
            double x = base(order[k], 0);
            double y = base(order[k], 1);
            if (noise > 0.0) {
                x += noise * gauss(rng);
                y += noise * gauss(rng);
            }
            d.samples(k, 0) = c * x - s * y;
            d.samples(k, 1) = s * x + c * y;
            d.labels[k] = base_labels[order[k]];
        }
        data.domains.push_back(std::move(d));
    }
    data.validate();
    return data;
}

TrainStream::TrainStream(const DomainDataset& data, std::vector<std::size_t> domains,
                         std::vector<std::vector<std::size_t>> rows, std::size_t batch_per_domain, std::uint64_t seed)
    : data_(&data),
      domains_(std::move(domains)),
      rows_(std::move(rows)),
      cursor_(domains_.size(), 0),
      batch_per_domain_(batch_per_domain) {
    if (batch_per_domain == 0) throw ConfigError("batch size per domain must be positive");
    if (domains_.empty()) throw InputError("no training domains");
    if (rows_.size() != domains_.size()) throw ContractError("TrainStream: rows per domain mismatch");
    for (std::size_t i = 0; i < domains_.size(); ++i) {
        if (rows_[i].empty()) throw InputError("training domain has no samples");
        rngs_.push_back(seeded(seed, 1000 + i));
        std::shuffle(rows_[i].begin(), rows_[i].end(), rngs_[i]);
    }
}

LabeledSet TrainStream::next() {
    std::vector<std::pair<std::size_t, std::size_t>> picks;
    picks.reserve(batch_size());
    for (std::size_t i = 0; i < domains_.size(); ++i) {
        for (std::size_t k = 0; k < batch_per_domain_; ++k) {
            if (cursor_[i] == rows_[i].size()) {
                std::shuffle(rows_[i].begin(), rows_[i].end(), rngs_[i]);
                cursor_[i] = 0;
            }
            picks.emplace_back(domains_[i], rows_[i][cursor_[i]++]);
        }
    }
    return gather(*data_, picks);
}

DomainSplit split(const DomainDataset& data, const SplitOptions& opts) {
    if (!(opts.val_fraction > 0.0 && opts.val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0, 1)");
    const std::size_t test_index = domain_index(data, opts.test_domain);
    if (data.domains.size() < 2) throw InputError("leave-one-domain-out needs at least two domains");

    DomainSplit out;
    out.test_domain = opts.test_domain;
    auto rng = seeded(opts.seed, 0x73706c74u);

    auto shuffled_rows = [&](std::size_t n) {
        std::vector<std::size_t> rows(n);
        for (std::size_t i = 0; i < n; ++i) rows[i] = i;
        std::shuffle(rows.begin(), rows.end(), rng);
        return rows;
    };
    auto val_count = [&](std::size_t n) {
        return static_cast<std::size_t>(std::llround(opts.val_fraction * static_cast<double>(n)));
    };

    std::vector<std::pair<std::size_t, std::size_t>> train_picks, val_picks, test_picks;
    for (std::size_t di = 0; di < data.domains.size(); ++di) {
        const std::size_t n = data.domains[di].samples.rows();
        auto rows = shuffled_rows(n);
        if (di == test_index) {
            const std::size_t nv = opts.validation == ValidationMode::test_domain ? val_count(n) : 0;
            for (std::size_t k = 0; k < n; ++k) (k < nv ? val_picks : test_picks).emplace_back(di, rows[k]);
            continue;
        }
        out.train_domains.push_back(data.domains[di].name);
        out.train_domain_indices.push_back(di);
        const std::size_t nv = opts.validation == ValidationMode::in_domain ? val_count(n) : 0;
        std::vector<std::size_t> kept;
        for (std::size_t k = 0; k < n; ++k) {
            if (k < nv) {
                val_picks.emplace_back(di, rows[k]);
            } else {
                kept.push_back(rows[k]);
                train_picks.emplace_back(di, rows[k]);
            }
        }
        if (kept.empty()) throw InputError("domain '" + data.domains[di].name + "' has no training samples left");
        out.train_rows.push_back(std::move(kept));
    }
    out.train = gather(data, train_picks);
    out.val = gather(data, val_picks);
    out.test = gather(data, test_picks);
    return out;
}

TrainStream train_stream(const DomainDataset& data, const DomainSplit& s, std::size_t batch_per_domain,
                         std::uint64_t seed) {
    return TrainStream(data, s.train_domain_indices, s.train_rows, batch_per_domain, seed);
}

LabeledSet domain_set(const DomainDataset& data, const std::string& name) {
    const std::size_t di = domain_index(data, name);
    std::vector<std::pair<std::size_t, std::size_t>> picks;
    for (std::size_t r = 0; r < data.domains[di].samples.rows(); ++r) picks.emplace_back(di, r);
    return gather(data, picks);
}

void write_dataset_csv(std::ostream& out, const DomainDataset& data) {
    data.validate();
    out << "# gaqat-dataset v1\n";
    out << "# seed=" << data.seed << " num_classes=" << data.num_classes << " feature_dim=" << data.feature_dim() << "\n";
    char buf[64];
    for (const auto& d : data.domains) {
        std::snprintf(buf, sizeof buf, "%.17g", d.angle_degrees);
        out << "# domain=" << d.name << " angle=" << buf;
        std::snprintf(buf, sizeof buf, "%.17g", d.noise);
        out << " noise=" << buf << " n=" << d.samples.rows() << "\n";
    }
    out << "domain";
    for (std::size_t j = 0; j < data.feature_dim(); ++j) out << ",x" << j;
    out << ",label\n";
    for (const auto& d : data.domains) {
        for (std::size_t r = 0; r < d.samples.rows(); ++r) {
            out << d.name;
            for (double v : d.samples.row(r)) {
                std::snprintf(buf, sizeof buf, "%.17g", v);
                out << ',' << buf;
            }
            out << ',' << d.labels[r] << '\n';
        }
    }
}

DomainDataset read_dataset_csv(std::istream& in) {
    DomainDataset data;
    std::string line;
    if (!std::getline(in, line) || line != "# gaqat-dataset v1") throw InputError("dataset CSV: missing version header");
    std::size_t dim = 0;
    auto field = [](const std::string& text, const std::string& key) -> std::string {
        const auto pos = text.find(key + "=");
        if (pos == std::string::npos) throw InputError("dataset CSV: header lacks '" + key + "'");
        const auto start = pos + key.size() + 1;
        return text.substr(start, text.find(' ', start) - start);
    };
    while (std::getline(in, line) && line.starts_with("#")) {
        if (line.find("domain=") != std::string::npos) {
            Domain d;
            d.name = field(line, "domain");
            d.angle_degrees = std::stod(field(line, "angle"));
            d.noise = std::stod(field(line, "noise"));
            data.domains.push_back(std::move(d));
        } else {
            data.seed = std::stoull(field(line, "seed"));
            data.num_classes = std::stoi(field(line, "num_classes"));
            dim = std::stoul(field(line, "feature_dim"));
        }
    }
    if (!line.starts_with("domain,")) throw InputError("dataset CSV: missing column header");
    std::vector<std::vector<double>> values(data.domains.size());
    std::vector<std::vector<int>> labels(data.domains.size());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        std::size_t di = domain_index(data, cell);
        for (std::size_t j = 0; j < dim; ++j) {
            if (!std::getline(ss, cell, ',')) throw InputError("dataset CSV: short row");
            values[di].push_back(std::stod(cell));
        }
        if (!std::getline(ss, cell, ',')) throw InputError("dataset CSV: missing label");
        labels[di].push_back(std::stoi(cell));
    }
    for (std::size_t di = 0; di < data.domains.size(); ++di) {
        auto& d = data.domains[di];
        d.samples = Matrix(labels[di].size(), dim);
        std::copy(values[di].begin(), values[di].end(), d.samples.values().begin());
        d.labels = std::move(labels[di]);
    }
    data.validate();
    return data;
}

}  // namespace gaqat
