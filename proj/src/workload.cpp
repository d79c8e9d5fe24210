#include "lire/workload.hpp"

#include <algorithm>
#include <cmath>

namespace lire {

double Rng::gaussian() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t WorkloadSpec::updates_per_epoch() const {
    return std::uint64_t(std::llround(update_rate * double(base_size)));
}

void WorkloadSpec::validate() const {
    if (base_size == 0) raise(ErrorCode::invalid_argument, "base_size must be positive");
    if (dim == 0) raise(ErrorCode::invalid_argument, "dim must be positive");
    if (update_rate < 0.0 || update_rate > 1.0)
        raise(ErrorCode::invalid_argument, "update_rate must be in [0,1]");
    if (epochs > 0 && updates_per_epoch() == 0)
        raise(ErrorCode::invalid_argument, "update_rate * base_size must be at least 1");
    if (pool_size < std::uint64_t(epochs) * updates_per_epoch())
        raise(ErrorCode::invalid_argument, "pool too small for the requested epochs");
    if (holdout_fraction < 0.0 || holdout_fraction >= 0.5)
        raise(ErrorCode::invalid_argument, "holdout_fraction must be in [0, 0.5)");
    if (distribution == Distribution::clustered_shift && blob_count == 0)
        raise(ErrorCode::invalid_argument, "clustered_shift needs at least one blob");
}

namespace {

Vector clamp_domain(Vector v, ElementType et) {
    // Components stay in [0, 100); uint8 indices additionally round to ints.
    for (float& f : v) {
        if (f < 0.0f) f = 0.0f;
        if (f > 99.0f) f = 99.0f;
        if (et == ElementType::uint8) f = std::nearbyintf(f);
    }
    return v;
}

struct Mixture {
    std::vector<Vector> centers;  // at epoch 0
    std::vector<Vector> drift;    // per-epoch displacement

    Vector sample(Rng& rng, const WorkloadSpec& spec, std::uint32_t epoch) const {
        std::size_t b = std::size_t(rng.below(centers.size()));
        Vector v(spec.dim);
        for (std::uint32_t d = 0; d < spec.dim; ++d) {
            double c = centers[b][d] + double(epoch) * drift[b][d];
            v[d] = float(c + spec.blob_sigma * rng.gaussian());
        }
        return clamp_domain(std::move(v), spec.element_type);
    }
};

Mixture make_mixture(Rng& rng, const WorkloadSpec& spec) {
    Mixture m;
    for (std::uint32_t b = 0; b < spec.blob_count; ++b) {
        Vector c(spec.dim);
        for (std::uint32_t d = 0; d < spec.dim; ++d)
            c[d] = float(rng.uniform(10.0, 90.0));
        Vector dir(spec.dim);
        double norm = 0.0;
        for (std::uint32_t d = 0; d < spec.dim; ++d) {
            dir[d] = float(rng.gaussian());
            norm += double(dir[d]) * dir[d];
        }
        norm = std::sqrt(std::max(norm, 1e-12));
        for (float& f : dir) f = float(double(f) / norm * spec.drift_step);
        m.centers.push_back(std::move(c));
        m.drift.push_back(std::move(dir));
    }
    return m;
}

Vector sample_uniform(Rng& rng, const WorkloadSpec& spec) {
    Vector v(spec.dim);
    for (std::uint32_t d = 0; d < spec.dim; ++d) v[d] = float(rng.uniform(0.0, 100.0));
    return clamp_domain(std::move(v), spec.element_type);
}

}  // namespace

Workload generate_workload(const WorkloadSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    Workload w;

    Mixture mix;
    const bool clustered = spec.distribution == Distribution::clustered_shift;
    if (clustered) mix = make_mixture(rng, spec);

    auto draw = [&](std::uint32_t epoch) {
        return clustered ? mix.sample(rng, spec, epoch) : sample_uniform(rng, spec);
    };

    // Base vectors at epoch 0; a holdout slice becomes the query set and is
    // never inserted anywhere.
    std::vector<Vector> base_vecs;
    base_vecs.reserve(spec.base_size);
    for (std::uint64_t i = 0; i < spec.base_size; ++i) base_vecs.push_back(draw(0));

    const std::uint64_t holdout =
        std::max<std::uint64_t>(1, std::uint64_t(spec.holdout_fraction * double(spec.base_size)));
    std::vector<std::uint64_t> perm(spec.base_size);
    for (std::uint64_t i = 0; i < spec.base_size; ++i) perm[i] = i;
    for (std::uint64_t i = spec.base_size; i > 1; --i)
        std::swap(perm[i - 1], perm[rng.below(i)]);

    for (std::uint64_t i = 0; i < holdout; ++i) w.queries.push_back(base_vecs[perm[i]]);
    VectorId next_id = 1;
    std::vector<VectorId> live;
    for (std::uint64_t i = holdout; i < spec.base_size; ++i) {
        w.base.emplace(next_id, base_vecs[perm[i]]);
        live.push_back(next_id);
        ++next_id;
    }

    const std::uint64_t per_epoch = spec.updates_per_epoch();
    for (std::uint32_t e = 1; e <= spec.epochs; ++e) {
        EpochStream stream;
        for (std::uint64_t i = 0; i < per_epoch; ++i) {
            std::uint64_t pick = rng.below(live.size());
            stream.deletes.push_back(live[pick]);
            live[pick] = live.back();
            live.pop_back();
        }
        for (std::uint64_t i = 0; i < per_epoch; ++i) {
            Vector v = draw(e);
            w.pool.push_back(v);
            stream.inserts.emplace_back(next_id, std::move(v));
            live.push_back(next_id);
            ++next_id;
        }
        w.epochs.push_back(std::move(stream));
    }
    return w;
}

WorkloadSpec spec_from_kv(const std::map<std::string, std::string>& kv) {
    WorkloadSpec spec;
    auto get = [&](const char* key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    if (auto* s = get("base_size")) spec.base_size = std::stoull(*s);
    if (auto* s = get("pool_size")) spec.pool_size = std::stoull(*s);
    if (auto* s = get("epochs")) spec.epochs = std::uint32_t(std::stoul(*s));
    if (auto* s = get("update_rate")) spec.update_rate = std::stod(*s);
    if (auto* s = get("distribution")) {
        if (*s == "uniform")
            spec.distribution = Distribution::uniform;
        else if (*s == "clustered_shift")
            spec.distribution = Distribution::clustered_shift;
        else
            raise(ErrorCode::invalid_argument, "unknown distribution: " + *s);
    }
    if (auto* s = get("seed")) spec.seed = std::stoull(*s);
    if (auto* s = get("dim")) spec.dim = std::uint32_t(std::stoul(*s));
    if (auto* s = get("element_type")) {
        if (*s == "float32")
            spec.element_type = ElementType::float32;
        else if (*s == "uint8")
            spec.element_type = ElementType::uint8;
        else
            raise(ErrorCode::invalid_argument, "unknown element_type: " + *s);
    }
    if (auto* s = get("blob_count")) spec.blob_count = std::uint32_t(std::stoul(*s));
    if (auto* s = get("blob_sigma")) spec.blob_sigma = std::stod(*s);
    if (auto* s = get("drift_step")) spec.drift_step = std::stod(*s);
    if (auto* s = get("holdout_fraction")) spec.holdout_fraction = std::stod(*s);
    spec.validate();
    return spec;
}

}  // namespace lire
