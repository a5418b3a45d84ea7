#pragma once

// Experiment configuration. TOML files use the benchmark's table units
// (MPa, GPa^-1, 1e-15 m^2, 1e-10 kg/(m s)); values are converted to SI on
// load.

#include <filesystem>
#include <optional>
#include <string>

#include <toml.hpp>

#include "pspl/error.hpp"
#include "pspl/fem.hpp"
#include "pspl/mesh.hpp"
#include "pspl/state.hpp"
#include "pspl/system.hpp"

namespace pspl {

/// Table-unit scale factors to SI.
namespace units {
inline constexpr double mpa = 1e6;
inline constexpr double per_gpa = 1e-9;
inline constexpr double perm = 1e-15;
inline constexpr double exchange = 1e-10;
} // namespace units

struct MeshSource {
    std::optional<std::string> file; ///< MSH 2.2 path; generated from `spec` when absent
    MeshSpec spec;

    Mesh load() const
    {
        if (file) {
            if (!std::filesystem::exists(*file))
                throw IoError("mesh file not found: " + *file);
            return read_msh2(*file);
        }
        return generate_unit_square(spec);
    }
};

/// Material parameters in table units, each optional over a base set.
struct ParameterOverrides {
    std::optional<double> mu, lambda, beta1, beta2, k1, k2, alpha1, alpha2, eta, gamma;

    bool any() const { return mu || lambda || beta1 || beta2 || k1 || k2 || alpha1 || alpha2 || eta || gamma; }

    void apply(MaterialParams& p) const
    {
        if (mu)
            p.mu = *mu * units::mpa;
        if (lambda)
            p.lambda = *lambda * units::mpa;
        if (beta1)
            p.beta1 = *beta1 * units::per_gpa;
        if (beta2)
            p.beta2 = *beta2 * units::per_gpa;
        if (k1)
            p.k1 = *k1 * units::perm;
        if (k2)
            p.k2 = *k2 * units::perm;
        if (alpha1)
            p.alpha1 = *alpha1;
        if (alpha2)
            p.alpha2 = *alpha2;
        if (eta)
            p.eta = *eta;
        if (gamma)
            p.gamma = *gamma * units::exchange;
    }
};

struct ExperimentConfig {
    MeshSource mesh;
    int parameter_set = 1;
    ParameterOverrides overrides;
    SchemeConfig scheme;
    std::string output_dir = "run";
    std::string bc_layout = "prose";
    double load_amplitude = 1.0;
    std::uint64_t seed = 42;

    /// "set1".."set3", or "custom" once any parameter is overridden.
    std::string parameter_label() const
    {
        return overrides.any() ? "custom" : "set" + std::to_string(parameter_set);
    }

    MaterialParams params() const
    {
        MaterialParams p = pspl::parameter_set(parameter_set);
        overrides.apply(p);
        return p;
    }

    ProblemData problem() const
    {
        ProblemData d;
        d.traction = load_amplitude == 0.0 ? Traction{} : sinusoidal_normal_traction(load_amplitude);
        return d;
    }

    void validate() const
    {
        if (mesh.file && !std::filesystem::exists(*mesh.file))
            throw IoError("mesh file not found: " + *mesh.file);
        if (!mesh.file && mesh.spec.resolution < 2)
            throw InvalidSpecError("mesh resolution must be >= 2");
        if (!(mesh.spec.grading >= 1.0))
            throw InvalidSpecError("mesh grading must be >= 1");
        params().validate();
        scheme.validate();
        BcLayout::from_name(bc_layout);
        if (!std::isfinite(load_amplitude))
            throw InvalidSpecError("load amplitude must be finite");
    }
};

namespace detail {
template <class T>
void read_opt(const toml::table& t, const char* key, std::optional<T>& out)
{
    if (auto n = t.get(key)) {
        if constexpr (std::is_same_v<T, double>) {
            auto v = n->value<double>();
            if (!v)
                throw InvalidSpecError(std::string("config key '") + key + "' must be a number");
            out = *v;
        } else {
            auto v = n->value<T>();
            if (!v)
                throw InvalidSpecError(std::string("config key '") + key + "' has the wrong type");
            out = *v;
        }
    }
}

template <class T>
void read_into(const toml::table& t, const char* key, T& out)
{
    std::optional<T> v;
    read_opt(t, key, v);
    if (v)
        out = *v;
}

inline const toml::table* section(const toml::table& root, const char* name)
{
    auto n = root.get(name);
    if (!n)
        return nullptr;
    if (!n->is_table())
        throw InvalidSpecError(std::string("config section [") + name + "] must be a table");
    return n->as_table();
}
} // namespace detail

/// Reads a TOML experiment file on top of `base`.
inline ExperimentConfig parse_config(const toml::table& root, ExperimentConfig cfg = {})
{
    using detail::read_into;
    using detail::read_opt;
    if (auto m = detail::section(root, "mesh")) {
        std::optional<std::string> file;
        read_opt(*m, "file", file);
        if (file)
            cfg.mesh.file = file;
        std::optional<std::int64_t> res;
        read_opt(*m, "resolution", res);
        if (res)
            cfg.mesh.spec.resolution = int(*res);
        read_into(*m, "grading", cfg.mesh.spec.grading);
        read_into(*m, "strip_half_width", cfg.mesh.spec.strip_half_width);
    }
    if (auto p = detail::section(root, "parameters")) {
        if (auto s = p->get("set")) {
            if (auto i = s->value<std::int64_t>())
                cfg.parameter_set = int(*i);
            else if (auto str = s->value<std::string>()) {
                if (*str == "set1" || *str == "set2" || *str == "set3")
                    cfg.parameter_set = (*str)[3] - '0';
                else
                    throw InvalidSpecError("unknown parameter set '" + *str + "'");
            } else
                throw InvalidSpecError("parameters.set must be 1, 2, 3 or \"setN\"");
        }
        auto& o = cfg.overrides;
        read_opt(*p, "mu", o.mu);
        read_opt(*p, "lambda", o.lambda);
        read_opt(*p, "beta1", o.beta1);
        read_opt(*p, "beta2", o.beta2);
        read_opt(*p, "k1", o.k1);
        read_opt(*p, "k2", o.k2);
        read_opt(*p, "alpha1", o.alpha1);
        read_opt(*p, "alpha2", o.alpha2);
        read_opt(*p, "eta", o.eta);
        read_opt(*p, "gamma", o.gamma);
    }
    if (auto s = detail::section(root, "scheme")) {
        std::optional<std::string> kind;
        read_opt(*s, "kind", kind);
        if (kind)
            cfg.scheme.kind = parse_scheme(*kind);
        read_into(*s, "theta", cfg.scheme.theta);
        read_into(*s, "tau", cfg.scheme.tau);
        read_into(*s, "t_end", cfg.scheme.t_end);
        read_into(*s, "tol", cfg.scheme.tol);
        read_into(*s, "energy_monitor", cfg.scheme.energy_monitor);
        std::optional<std::int64_t> every, max_iter;
        read_opt(*s, "snapshot_every", every);
        read_opt(*s, "max_iter", max_iter);
        if (every) {
            if (*every < 1)
                throw InvalidSpecError("scheme.snapshot_every must be >= 1");
            cfg.scheme.snapshot_every = std::size_t(*every);
        }
        if (max_iter) {
            if (*max_iter < 0)
                throw InvalidSpecError("scheme.max_iter must be >= 0");
            cfg.scheme.max_iter = std::size_t(*max_iter);
        }
    }
    if (auto o = detail::section(root, "output"))
        read_into(*o, "dir", cfg.output_dir);
    if (auto p = detail::section(root, "problem")) {
        read_into(*p, "bc_layout", cfg.bc_layout);
        read_into(*p, "load_amplitude", cfg.load_amplitude);
    }
    if (auto n = root.get("seed")) {
        auto v = n->value<std::int64_t>();
        if (!v || *v < 0)
            throw InvalidSpecError("seed must be a nonnegative integer");
        cfg.seed = std::uint64_t(*v);
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {})
{
    if (!std::filesystem::exists(path))
        throw IoError("config file not found: " + path);
    try {
        return parse_config(toml::parse_file(path), std::move(base));
    } catch (const toml::parse_error& e) {
        throw InvalidSpecError("config " + path + ": " + std::string(e.description()));
    }
}

} // namespace pspl
