#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "gaqat/network.hpp"
#include "gaqat/tensor.hpp"

namespace gaqat {

struct Domain {
    std::string name;
    Matrix samples;  // n x d
    std::vector<int> labels;
    double angle_degrees = 0.0;
    double noise = 0.0;
};

/// Labeled samples partitioned into named domains sharing one feature space.
struct DomainDataset {
    std::vector<Domain> domains;
    std::uint64_t seed = 0;
    int num_classes = 2;

    const Domain& domain(const std::string& name) const;
    std::size_t feature_dim() const;
    void validate() const;
};

/// Two-moons binary problem translated so its centroid sits at the origin, one
/// domain per angle, each rotated about the origin.
/// Domains are named d0, d1, ...
DomainDataset make_rotated_moons(const std::vector<double>& angles_degrees, std::size_t n_per_domain, double noise,
                                 std::uint64_t seed);

/// Same, with explicit domain names (must be unique).
DomainDataset make_rotated_moons(const std::vector<std::string>& names, const std::vector<double>& angles_degrees,
                                 std::size_t n_per_domain, double noise, std::uint64_t seed);

enum class ValidationMode : std::uint8_t {
    test_domain,  // validation drawn from the held-out domain
    in_domain,    // validation drawn from each training domain
};

/// Identifies one sample: (domain index, row index).
struct SampleId {
    std::size_t domain = 0;
    std::size_t row = 0;
    auto operator<=>(const SampleId&) const = default;
};

struct LabeledSet {
    Batch batch;
    std::vector<SampleId> ids;
};

/// Endless stream of training batches: each batch stacks `batch_per_domain`
/// samples from every training domain, in domain order. Every domain is
/// reshuffled at each pass through its samples.
class TrainStream {
public:
    TrainStream(const DomainDataset& data, std::vector<std::size_t> domains,
                std::vector<std::vector<std::size_t>> rows, std::size_t batch_per_domain, std::uint64_t seed);

    LabeledSet next();

    std::size_t batch_size() const { return batch_per_domain_ * domains_.size(); }

private:
    const DomainDataset* data_;
    std::vector<std::size_t> domains_;
    std::vector<std::vector<std::size_t>> rows_;
    std::vector<std::size_t> cursor_;
    std::size_t batch_per_domain_;
    std::vector<std::mt19937_64> rngs_;
};

struct DomainSplit {
    std::vector<std::string> train_domains;
    std::string test_domain;
    LabeledSet train;  // every training sample (for in-domain accuracy)
    LabeledSet val;
    LabeledSet test;
    std::vector<std::vector<std::size_t>> train_rows;  // per training domain, rows usable for training
    std::vector<std::size_t> train_domain_indices;
};

struct SplitOptions {
    std::string test_domain;
    double val_fraction = 0.2;
    ValidationMode validation = ValidationMode::test_domain;
    std::uint64_t seed = 0;
};

/// Leave-one-domain-out split.
DomainSplit split(const DomainDataset& data, const SplitOptions& opts);

/// Batch stream over a split's training rows.
TrainStream train_stream(const DomainDataset& data, const DomainSplit& split, std::size_t batch_per_domain,
                         std::uint64_t seed);

/// Whole domain as one labeled set.
LabeledSet domain_set(const DomainDataset& data, const std::string& name);

/// CSV with a '#'-prefixed header carrying generator parameters and the seed.
void write_dataset_csv(std::ostream& out, const DomainDataset& data);
DomainDataset read_dataset_csv(std::istream& in);

}  // namespace gaqat
