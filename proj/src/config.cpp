#include "config.hpp"

#include "errors.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace fastslow {

namespace {
constexpr const char* kModule = "harness_cli";

[[noreturn]] void invalid(const std::string& op, const std::string& msg) {
    raise(ErrorCategory::ConfigInvalid, kModule, op, msg);
}

/// Parses "1.5", "pi", "2pi", "-0.5*pi", "2*pi".
double parse_number(const std::string& raw, const std::string& path) {
    std::string s;
    for (char ch : raw) if (ch != ' ') s.push_back(ch);
    try {
        const auto pos = s.find("pi");
        if (pos != std::string::npos && pos + 2 == s.size()) {
            std::string factor = s.substr(0, pos);
            if (!factor.empty() && factor.back() == '*') factor.pop_back();
            double k = 1.0;
            if (factor == "-") k = -1.0;
            else if (!factor.empty()) k = parse_double(factor);
            return k * std::numbers::pi;
        }
        return parse_double(s);
    } catch (const Error&) {
        invalid("parse_config", "key '" + path + "' must be a number, got '" + raw + "'");
    } catch (const std::exception&) {
        invalid("parse_config", "key '" + path + "' must be a number, got '" + raw + "'");
    }
}

class Reader {
public:
    Reader(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {}

    const std::string& path() const { return path_; }
    const YAML::Node& node() const { return node_; }

    bool has(const std::string& key) const { return node_.IsMap() && node_[key] && !node_[key].IsNull(); }

    Reader at(const std::string& key) const {
        if (!node_.IsMap()) invalid("parse_config", "'" + path_ + "' must be a mapping");
        if (!has(key)) invalid("parse_config", "missing key '" + join(key) + "'");
        return Reader(node_[key], join(key));
    }

    std::optional<Reader> maybe(const std::string& key) const {
        if (!has(key)) return std::nullopt;
        return at(key);
    }

    void allow(std::initializer_list<const char*> keys) const {
        if (!node_.IsMap()) invalid("parse_config", "'" + path_ + "' must be a mapping");
        std::set<std::string> ok(keys.begin(), keys.end());
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (!ok.count(key)) invalid("parse_config", "unknown key '" + join(key) + "'");
        }
    }

    std::string scalar() const {
        if (!node_.IsScalar()) invalid("parse_config", "key '" + path_ + "' must be a scalar");
        return node_.Scalar();
    }

    double number() const { return parse_number(scalar(), path_); }

    long long integer() const {
        const double v = number();
        if (std::floor(v) != v || std::abs(v) > 9.0e15) invalid("parse_config", "key '" + path_ + "' must be an integer");
        return static_cast<long long>(v);
    }

    std::uint64_t unsigned_integer() const {
        const std::string s = scalar();
        if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
            invalid("parse_config", "key '" + path_ + "' must be a nonnegative integer");
        }
        try {
            return std::stoull(s);
        } catch (const std::exception&) {
            invalid("parse_config", "key '" + path_ + "' is out of range");
        }
    }

    bool boolean() const {
        const std::string s = scalar();
        if (s == "true" || s == "yes" || s == "on") return true;
        if (s == "false" || s == "no" || s == "off") return false;
        invalid("parse_config", "key '" + path_ + "' must be true or false");
    }

    std::vector<Reader> items() const {
        if (!node_.IsSequence()) invalid("parse_config", "key '" + path_ + "' must be a list");
        std::vector<Reader> out;
        for (std::size_t i = 0; i < node_.size(); ++i) out.emplace_back(node_[i], path_ + "[" + std::to_string(i) + "]");
        return out;
    }

    std::vector<double> numbers() const {
        std::vector<double> v;
        for (const auto& r : items()) v.push_back(r.number());
        return v;
    }

    std::vector<int> ints() const {
        std::vector<int> v;
        for (const auto& r : items()) v.push_back(static_cast<int>(r.integer()));
        return v;
    }

    Vec vec() const {
        const auto v = numbers();
        if (v.empty() || v.size() > static_cast<std::size_t>(kMaxDim)) invalid("parse_config", "key '" + path_ + "' must hold 1 to 3 numbers");
        Vec out(static_cast<int>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<int>(i)] = v[i];
        return out;
    }

    double number_or(const std::string& key, double fallback) const { return has(key) ? at(key).number() : fallback; }
    long long integer_or(const std::string& key, long long fallback) const { return has(key) ? at(key).integer() : fallback; }
    bool boolean_or(const std::string& key, bool fallback) const { return has(key) ? at(key).boolean() : fallback; }
    std::string string_or(const std::string& key, const std::string& fallback) const { return has(key) ? at(key).scalar() : fallback; }

private:
    std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    YAML::Node node_;
    std::string path_;
};

template <class F>
auto with_context(const std::string& path, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const Error& e) {
        if (e.category() == ErrorCategory::ConfigInvalid && e.module() == kModule) throw;
        invalid("parse_config", "key '" + path + "': " + e.detail());
    }
}

DriverConfig parse_driver(const Reader& r) {
    r.allow({"kind", "params", "dt_fast", "burn_in", "normalize", "calibration_samples", "observables", "coefficient_channels"});
    DriverConfig d;
    d.kind = with_context(r.path() + ".kind", [&] { return parse_driver_kind(r.at("kind").scalar()); });
    if (auto p = r.maybe("params")) {
        p->allow({"sigma", "rho", "beta", "gamma", "noise", "dimension"});
        d.params.sigma = p->number_or("sigma", d.params.sigma);
        d.params.rho = p->number_or("rho", d.params.rho);
        d.params.beta = p->number_or("beta", d.params.beta);
        d.params.gamma = p->number_or("gamma", d.params.gamma);
        d.params.noise = p->number_or("noise", d.params.noise);
        d.params.ou_dimension = static_cast<int>(p->integer_or("dimension", d.params.ou_dimension));
    }
    d.dt_fast = r.at("dt_fast").number();
    d.burn_in = r.integer_or("burn_in", d.burn_in);
    d.normalize = r.boolean_or("normalize", d.normalize);
    d.calibration_samples = r.integer_or("calibration_samples", d.calibration_samples);
    for (const auto& item : r.at("observables").items()) {
        item.allow({"coordinate", "gain", "bias", "center", "scale"});
        ObservableChannel ch;
        ch.coordinate = static_cast<int>(item.at("coordinate").integer());
        ch.gain = item.number_or("gain", 1.0);
        ch.bias = item.number_or("bias", 0.0);
        if (item.has("center")) ch.center = item.at("center").number();
        if (item.has("scale")) ch.scale = item.at("scale").number();
        d.observables.push_back(ch);
    }
    if (auto cc = r.maybe("coefficient_channels")) {
        for (const auto& item : cc->items()) {
            item.allow({"coordinate", "amplitude", "center", "scale"});
            CoefficientChannel ch;
            ch.coordinate = static_cast<int>(item.at("coordinate").integer());
            ch.amplitude = item.at("amplitude").number();
            if (item.has("center")) ch.center = item.at("center").number();
            if (item.has("scale")) ch.scale = item.at("scale").number();
            d.coefficient_channels.push_back(ch);
        }
    }
    return d;
}

ModesConfig parse_modes(const Reader& r) {
    r.allow({"domain", "periodic", "max_grad_norm", "list", "auto"});
    ModesConfig m;
    m.domain.lengths = r.at("domain").numbers();
    m.domain.periodic = r.boolean_or("periodic", true);
    m.max_grad_norm = r.number_or("max_grad_norm", m.max_grad_norm);
    if (r.has("list") == r.has("auto")) invalid("parse_config", "'" + r.path() + "' needs exactly one of 'list' or 'auto'");
    if (auto list = r.maybe("list")) {
        for (const auto& item : list->items()) {
            item.allow({"wavevector", "phase", "amplitude", "direction"});
            TrigMode t;
            t.wavevector = item.at("wavevector").vec();
            t.phase = item.number_or("phase", 0.0);
            t.amplitude = item.number_or("amplitude", 1.0);
            t.direction = item.at("direction").vec();
            m.list.push_back(t);
        }
    } else {
        const Reader a = r.at("auto");
        a.allow({"count", "max_wavenumber", "amplitude", "seed"});
        AutoModes g;
        g.count = static_cast<int>(a.at("count").integer());
        g.max_wavenumber = static_cast<int>(a.integer_or("max_wavenumber", 1));
        g.amplitude = a.number_or("amplitude", 1.0);
        g.seed = a.has("seed") ? a.at("seed").unsigned_integer() : 0;
        m.generate = g;
    }
    return m;
}

MeanVelocityField parse_velocity(const Reader& r, int dim) {
    const std::string kind = r.at("kind").scalar();
    const VelocityKind k = with_context(r.path() + ".kind", [&] { return parse_velocity_kind(kind); });
    switch (k) {
        case VelocityKind::Zero:
            r.allow({"kind"});
            return MeanVelocityField::zero(dim);
        case VelocityKind::Uniform:
            r.allow({"kind", "value"});
            return MeanVelocityField::make_uniform(r.at("value").vec());
        case VelocityKind::Shear:
            r.allow({"kind", "amplitude", "wavenumber", "flow_axis", "gradient_axis"});
            return MeanVelocityField::make_shear(dim, r.at("amplitude").number(), r.number_or("wavenumber", 1.0),
                                                 static_cast<int>(r.integer_or("flow_axis", 0)),
                                                 static_cast<int>(r.integer_or("gradient_axis", 1)));
        case VelocityKind::Cellular:
            r.allow({"kind", "amplitude", "wavenumber"});
            return MeanVelocityField::make_cellular(dim, r.at("amplitude").number(), r.number_or("wavenumber", 1.0));
        case VelocityKind::Rotation:
            r.allow({"kind", "omega", "center"});
            return MeanVelocityField::make_rotation(dim, r.at("omega").number(), r.at("center").vec());
        case VelocityKind::Linear: {
            r.allow({"kind", "matrix"});
            const auto rows = r.at("matrix").items();
            Mat a(static_cast<int>(rows.size()), static_cast<int>(rows.size()));
            for (std::size_t i = 0; i < rows.size(); ++i) {
                const auto v = rows[i].numbers();
                if (v.size() != rows.size()) invalid("parse_config", "key '" + r.path() + ".matrix' must be square");
                for (std::size_t j = 0; j < v.size(); ++j) a(static_cast<int>(i), static_cast<int>(j)) = v[j];
            }
            return MeanVelocityField::make_linear(a);
        }
    }
    invalid("parse_config", "unhandled velocity kind");
}

ProbeConfig parse_probes(const Reader& r) {
    r.allow({"lattice", "points"});
    ProbeConfig p;
    if (r.has("lattice") == r.has("points")) invalid("parse_config", "'" + r.path() + "' needs exactly one of 'lattice' or 'points'");
    if (auto l = r.maybe("lattice")) p.lattice = l->ints();
    if (auto pts = r.maybe("points")) {
        for (const auto& item : pts->items()) p.points.push_back(item.vec());
    }
    return p;
}

SamplingConfig parse_sampling(const Reader& r) {
    SamplingConfig s;
    s.samples = r.at("samples").integer();
    s.stride = r.integer_or("stride", 1);
    return s;
}

TruncationRule parse_truncation(const Reader& r) {
    r.allow({"rule", "lag", "multiple"});
    const auto kind = with_context(r.path() + ".rule", [&] { return parse_truncation_kind(r.at("rule").scalar()); });
    TruncationRule t;
    t.kind = kind;
    if (kind == TruncationRule::Kind::FixedLag) t.lag = static_cast<int>(r.at("lag").integer());
    if (kind == TruncationRule::Kind::EfoldMultiple) t.multiple = r.number_or("multiple", 8.0);
    else t.multiple = 0.0;
    return t;
}

ExperimentConfig parse_tree(const YAML::Node& root) {
    const Reader r(root, "");
    if (!root.IsMap()) invalid("parse_config", "config must be a mapping");
    r.allow({"kind", "seed", "threads", "driver", "modes", "velocity", "integration", "ensemble", "homogenization", "sde",
             "converge", "eof", "centering", "output"});
    ExperimentConfig c;
    c.kind = parse_experiment_kind(r.at("kind").scalar());
    c.seed = r.has("seed") ? r.at("seed").unsigned_integer() : 0;
    c.threads = static_cast<int>(r.integer_or("threads", 1));
    if (auto d = r.maybe("driver")) c.driver = parse_driver(*d);
    if (auto m = r.maybe("modes")) c.modes = parse_modes(*m);
    if (auto v = r.maybe("velocity")) {
        if (!c.modes) invalid("parse_config", "'velocity' needs the 'modes' block to fix the dimension");
        c.velocity = parse_velocity(*v, c.modes->domain.dim());
    }
    if (auto i = r.maybe("integration")) {
        i->allow({"eps", "dt_slow", "t_final", "output_stride", "initial_position"});
        IntegrationConfig ic;
        ic.eps = i->at("eps").number();
        if (i->has("dt_slow") && i->at("dt_slow").scalar() != "auto") ic.dt_slow = i->at("dt_slow").number();
        ic.t_final = i->at("t_final").number();
        ic.output_stride = static_cast<int>(i->integer_or("output_stride", 1));
        ic.initial_position = i->at("initial_position").vec();
        c.integration = ic;
    }
    if (auto e = r.maybe("ensemble")) {
        e->allow({"size"});
        c.ensemble = static_cast<int>(e->at("size").integer());
    }
    if (auto h = r.maybe("homogenization")) {
        h->allow({"samples", "stride", "truncation", "probes"});
        HomogenizationConfig hc;
        hc.sampling = parse_sampling(*h);
        if (auto t = h->maybe("truncation")) hc.truncation = parse_truncation(*t);
        hc.probes = parse_probes(h->at("probes"));
        c.homogenization = hc;
    }
    if (auto s = r.maybe("sde")) {
        s->allow({"interpretation", "dt", "t_final", "ensemble", "initial_position", "coefficients", "path"});
        SdeConfig sc;
        sc.interpretation = with_context(s->path() + ".interpretation", [&] { return parse_interpretation(s->at("interpretation").scalar()); });
        sc.dt = s->at("dt").number();
        sc.t_final = s->at("t_final").number();
        sc.ensemble = static_cast<int>(s->at("ensemble").integer());
        sc.initial_position = s->at("initial_position").vec();
        sc.source = parse_coefficient_source(s->at("coefficients").scalar());
        sc.path = s->string_or("path", "");
        c.sde = sc;
    }
    if (auto v = r.maybe("converge")) {
        v->allow({"eps_list", "t_final", "ensemble", "sde_dt", "reference", "reference_ensemble", "noise_resamples", "slack",
                  "variance_tolerance"});
        ConvergeConfig cc;
        cc.eps_list = v->at("eps_list").numbers();
        cc.t_final = v->at("t_final").number();
        cc.ensemble = static_cast<int>(v->integer_or("ensemble", cc.ensemble));
        cc.sde_dt = v->number_or("sde_dt", cc.sde_dt);
        if (v->has("reference")) cc.reference = parse_coefficient_source(v->at("reference").scalar());
        cc.reference_ensemble = static_cast<int>(v->integer_or("reference_ensemble", cc.ensemble));
        cc.noise_resamples = static_cast<int>(v->integer_or("noise_resamples", cc.noise_resamples));
        cc.slack = v->number_or("slack", cc.slack);
        cc.variance_tolerance = v->number_or("variance_tolerance", cc.variance_tolerance);
        c.converge = cc;
    }
    if (auto e = r.maybe("eof")) {
        e->allow({"input", "format", "cutoff_period", "grid", "min_count", "retained", "planted", "max_angle"});
        EofConfig ec;
        ec.input = e->string_or("input", "");
        ec.format = e->string_or("format", "csv");
        ec.cutoff_period = e->at("cutoff_period").number();
        ec.grid = e->at("grid").ints();
        ec.min_count = static_cast<int>(e->integer_or("min_count", ec.min_count));
        ec.retained = static_cast<int>(e->integer_or("retained", ec.retained));
        if (auto p = e->maybe("planted")) {
            for (const auto& item : p->items()) ec.planted.push_back(item.vec());
        }
        ec.max_angle = e->number_or("max_angle", ec.max_angle);
        c.eof = ec;
    }
    if (auto ce = r.maybe("centering")) {
        ce->allow({"samples", "stride", "probes", "sigmas", "inject_channel", "inject_mean"});
        CenteringConfig cc;
        cc.sampling = parse_sampling(*ce);
        cc.probes = parse_probes(ce->at("probes"));
        cc.sigmas = ce->number_or("sigmas", cc.sigmas);
        if (ce->has("inject_channel")) cc.inject_channel = static_cast<int>(ce->at("inject_channel").integer());
        cc.inject_mean = ce->number_or("inject_mean", 0.0);
        c.centering = cc;
    }
    if (auto o = r.maybe("output")) {
        o->allow({"dir", "trajectories", "trajectory_format"});
        c.output.dir = o->string_or("dir", c.output.dir);
        c.output.trajectories = o->boolean_or("trajectories", false);
        c.output.trajectory_format = o->string_or("trajectory_format", "csv");
    }
    return c;
}

void require(bool present, const char* key, ExperimentKind kind) {
    if (!present) {
        invalid("validate_config", "missing key '" + std::string(key) + "' required by kind '" +
                                       std::string(experiment_kind_name(kind)) + "'");
    }
}

void check_positive(double v, const char* key) {
    if (!(v > 0.0) || !std::isfinite(v)) invalid("validate_config", "key '" + std::string(key) + "' must be positive");
}

void check_probes(const ProbeConfig& p, int dim, const char* key) {
    if (!p.lattice.empty()) {
        if (static_cast<int>(p.lattice.size()) != dim) invalid("validate_config", "key '" + std::string(key) + ".lattice' needs one count per dimension");
        for (int n : p.lattice) if (n < 1) invalid("validate_config", "key '" + std::string(key) + ".lattice' counts must be positive");
    } else {
        if (p.points.empty()) invalid("validate_config", "key '" + std::string(key) + "' has no probes");
        for (const auto& x : p.points) if (x.size() != dim) invalid("validate_config", "key '" + std::string(key) + ".points' dimension mismatch");
    }
}

// Canonical emission ---------------------------------------------------------

void emit_num(YAML::Emitter& out, double v) { out << format_double(v); }

void emit_vec(YAML::Emitter& out, const Vec& v) {
    out << YAML::Flow << YAML::BeginSeq;
    for (int i = 0; i < v.size(); ++i) emit_num(out, v[i]);
    out << YAML::EndSeq;
}

template <class T>
void emit_list(YAML::Emitter& out, const std::vector<T>& v) {
    out << YAML::Flow << YAML::BeginSeq;
    for (const auto& x : v) {
        if constexpr (std::is_floating_point_v<T>) emit_num(out, x);
        else out << x;
    }
    out << YAML::EndSeq;
}

void emit_probes(YAML::Emitter& out, const ProbeConfig& p) {
    out << YAML::Key << "probes" << YAML::Value << YAML::BeginMap;
    if (!p.lattice.empty()) {
        out << YAML::Key << "lattice" << YAML::Value;
        emit_list(out, p.lattice);
    } else {
        out << YAML::Key << "points" << YAML::Value << YAML::BeginSeq;
        for (const auto& x : p.points) emit_vec(out, x);
        out << YAML::EndSeq;
    }
    out << YAML::EndMap;
}

}  // namespace

std::string_view experiment_kind_name(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::SimulateMultiscale: return "simulate-multiscale";
        case ExperimentKind::EstimateCoefficients: return "estimate-coefficients";
        case ExperimentKind::SimulateSde: return "simulate-sde";
        case ExperimentKind::Converge: return "converge";
        case ExperimentKind::Eof: return "eof";
        case ExperimentKind::CenteringCheck: return "centering-check";
    }
    return "unknown";
}

ExperimentKind parse_experiment_kind(std::string_view name) {
    for (auto k : {ExperimentKind::SimulateMultiscale, ExperimentKind::EstimateCoefficients, ExperimentKind::SimulateSde,
                   ExperimentKind::Converge, ExperimentKind::Eof, ExperimentKind::CenteringCheck}) {
        if (experiment_kind_name(k) == name) return k;
    }
    invalid("parse_config", "unknown experiment kind '" + std::string(name) + "'");
}

std::string_view coefficient_source_name(CoefficientSource s) {
    switch (s) {
        case CoefficientSource::Estimate: return "estimate";
        case CoefficientSource::Analytic: return "analytic";
        case CoefficientSource::File: return "file";
        case CoefficientSource::Zero: return "zero";
    }
    return "unknown";
}

CoefficientSource parse_coefficient_source(std::string_view name) {
    for (auto s : {CoefficientSource::Estimate, CoefficientSource::Analytic, CoefficientSource::File, CoefficientSource::Zero}) {
        if (coefficient_source_name(s) == name) return s;
    }
    invalid("parse_config", "coefficient source must be estimate, analytic, file or zero; got '" + std::string(name) + "'");
}

ExperimentConfig parse_config(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        invalid("parse_config", std::string("malformed YAML: ") + e.what());
    }
    ExperimentConfig c = parse_tree(root);
    validate_config(c);
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorCategory::Io, kModule, "load_config", "cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void validate_config(const ExperimentConfig& c) {
    const ExperimentKind k = c.kind;
    if (c.threads < 1) invalid("validate_config", "key 'threads' must be >= 1");
    const bool needs_multiscale = k == ExperimentKind::SimulateMultiscale || k == ExperimentKind::Converge ||
                                  (k == ExperimentKind::Eof && c.eof && c.eof->input.empty());
    const bool sde_needs_driver = k == ExperimentKind::SimulateSde && c.sde &&
                                  (c.sde->source == CoefficientSource::Estimate || c.sde->source == CoefficientSource::Analytic);
    switch (k) {
        case ExperimentKind::SimulateMultiscale: require(c.ensemble.has_value(), "ensemble", k); break;
        case ExperimentKind::EstimateCoefficients: require(c.homogenization.has_value(), "homogenization", k); break;
        case ExperimentKind::SimulateSde:
            require(c.sde.has_value(), "sde", k);
            require(c.modes.has_value(), "modes", k);
            require(c.velocity.has_value(), "velocity", k);
            if (c.sde->source == CoefficientSource::Estimate) require(c.homogenization.has_value(), "homogenization", k);
            if (c.sde->source == CoefficientSource::File && c.sde->path.empty()) invalid("validate_config", "missing key 'sde.path'");
            break;
        case ExperimentKind::Converge:
            require(c.converge.has_value(), "converge", k);
            if (c.converge->reference == CoefficientSource::Estimate) require(c.homogenization.has_value(), "homogenization", k);
            break;
        case ExperimentKind::Eof:
            require(c.eof.has_value(), "eof", k);
            if (c.eof->input.empty()) require(c.ensemble.has_value(), "ensemble", k);
            else if (c.eof->format == "csv") require(c.modes.has_value(), "modes", k);
            break;
        case ExperimentKind::CenteringCheck: require(c.centering.has_value(), "centering", k); break;
    }
    const bool needs_driver = k == ExperimentKind::EstimateCoefficients || k == ExperimentKind::CenteringCheck ||
                              needs_multiscale || sde_needs_driver;
    if (needs_driver) {
        require(c.driver.has_value(), "driver", k);
        require(c.modes.has_value(), "modes", k);
    }
    if (needs_multiscale) {
        require(c.integration.has_value(), "integration", k);
        require(c.velocity.has_value(), "velocity", k);
    }
    if (k == ExperimentKind::EstimateCoefficients) require(c.velocity.has_value(), "velocity", k);

    if (c.modes) {
        const int d = c.modes->domain.dim();
        if (d < 1 || d > kMaxDim) invalid("validate_config", "key 'modes.domain' must have 1 to 3 lengths");
        for (double l : c.modes->domain.lengths) check_positive(l, "modes.domain");
        const int m = c.modes->generate ? c.modes->generate->count : static_cast<int>(c.modes->list.size());
        if (c.driver && static_cast<int>(c.driver->observables.size()) != m) {
            invalid("validate_config", "key 'driver.observables' must list one channel per mode (" + std::to_string(m) + ")");
        }
        if (c.driver && !c.driver->coefficient_channels.empty() && static_cast<int>(c.driver->coefficient_channels.size()) != m) {
            invalid("validate_config", "key 'driver.coefficient_channels' must list one channel per mode");
        }
        if (c.velocity) c.velocity->validate(c.modes->domain);
        if (c.integration && c.integration->initial_position.size() != d) {
            invalid("validate_config", "key 'integration.initial_position' must have " + std::to_string(d) + " components");
        }
        if (c.sde && c.sde->initial_position.size() != d) {
            invalid("validate_config", "key 'sde.initial_position' must have " + std::to_string(d) + " components");
        }
        if (c.homogenization) check_probes(c.homogenization->probes, d, "homogenization.probes");
        if (c.centering) check_probes(c.centering->probes, d, "centering.probes");
        if (c.eof && static_cast<int>(c.eof->grid.size()) != d) invalid("validate_config", "key 'eof.grid' needs one count per dimension");
    }
    if (c.driver) {
        check_positive(c.driver->dt_fast, "driver.dt_fast");
        if (c.driver->burn_in < 0) invalid("validate_config", "key 'driver.burn_in' must be >= 0");
        if (c.driver->calibration_samples < 2) invalid("validate_config", "key 'driver.calibration_samples' must be >= 2");
    }
    if (c.integration) {
        const double eps = c.integration->eps;
        if (!(eps > 0.0 && eps <= 1.0)) invalid("validate_config", "key 'integration.eps' must lie in (0, 1]");
        if (c.integration->dt_slow) check_positive(*c.integration->dt_slow, "integration.dt_slow");
        check_positive(c.integration->t_final, "integration.t_final");
        if (c.integration->output_stride < 1) invalid("validate_config", "key 'integration.output_stride' must be >= 1");
    }
    if (c.ensemble && *c.ensemble < 1) invalid("validate_config", "key 'ensemble.size' must be >= 1");
    if (c.homogenization) {
        if (c.homogenization->sampling.samples < 2) invalid("validate_config", "key 'homogenization.samples' must be >= 2");
        if (c.homogenization->sampling.stride < 1) invalid("validate_config", "key 'homogenization.stride' must be >= 1");
    }
    if (c.sde) {
        check_positive(c.sde->dt, "sde.dt");
        check_positive(c.sde->t_final, "sde.t_final");
        if (c.sde->ensemble < 2) invalid("validate_config", "key 'sde.ensemble' must be >= 2");
    }
    if (c.converge) {
        const auto& e = c.converge->eps_list;
        if (e.size() < 3) invalid("validate_config", "key 'converge.eps_list' needs at least 3 values");
        for (std::size_t i = 0; i < e.size(); ++i) {
            if (!(e[i] > 0.0 && e[i] <= 1.0)) invalid("validate_config", "key 'converge.eps_list' values must lie in (0, 1]");
            if (i > 0 && !(e[i] < e[i - 1])) invalid("validate_config", "key 'converge.eps_list' must be strictly decreasing");
        }
        check_positive(c.converge->t_final, "converge.t_final");
        check_positive(c.converge->sde_dt, "converge.sde_dt");
        if (c.converge->ensemble < 2 || c.converge->reference_ensemble < 2) invalid("validate_config", "converge ensembles must be >= 2");
        if (c.converge->noise_resamples < 1) invalid("validate_config", "key 'converge.noise_resamples' must be >= 1");
        if (c.converge->reference == CoefficientSource::File || c.converge->reference == CoefficientSource::Zero) {
            invalid("validate_config", "key 'converge.reference' must be analytic or estimate");
        }
    }
    if (c.eof) {
        check_positive(c.eof->cutoff_period, "eof.cutoff_period");
        if (c.eof->format != "csv" && c.eof->format != "binary") invalid("validate_config", "key 'eof.format' must be csv or binary");
        for (int n : c.eof->grid) if (n < 1) invalid("validate_config", "key 'eof.grid' counts must be positive");
    }
    if (c.centering) {
        if (c.centering->sampling.samples < 2) invalid("validate_config", "key 'centering.samples' must be >= 2");
        if (c.centering->inject_channel && c.modes) {
            const int ch = *c.centering->inject_channel;
            const int m = c.modes->generate ? c.modes->generate->count : static_cast<int>(c.modes->list.size());
            if (ch < 0 || ch >= m) invalid("validate_config", "key 'centering.inject_channel' out of range");
        }
    }
    if (c.output.trajectory_format != "csv" && c.output.trajectory_format != "binary") {
        invalid("validate_config", "key 'output.trajectory_format' must be csv or binary");
    }
}

std::string serialize_config(const ExperimentConfig& c) {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "kind" << YAML::Value << std::string(experiment_kind_name(c.kind));
    out << YAML::Key << "seed" << YAML::Value << c.seed;
    out << YAML::Key << "threads" << YAML::Value << c.threads;
    if (c.driver) {
        const auto& d = *c.driver;
        out << YAML::Key << "driver" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "kind" << YAML::Value << std::string(driver_kind_name(d.kind));
        out << YAML::Key << "params" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "sigma" << YAML::Value; emit_num(out, d.params.sigma);
        out << YAML::Key << "rho" << YAML::Value; emit_num(out, d.params.rho);
        out << YAML::Key << "beta" << YAML::Value; emit_num(out, d.params.beta);
        out << YAML::Key << "gamma" << YAML::Value; emit_num(out, d.params.gamma);
        out << YAML::Key << "noise" << YAML::Value; emit_num(out, d.params.noise);
        out << YAML::Key << "dimension" << YAML::Value << d.params.ou_dimension;
        out << YAML::EndMap;
        out << YAML::Key << "dt_fast" << YAML::Value; emit_num(out, d.dt_fast);
        out << YAML::Key << "burn_in" << YAML::Value << d.burn_in;
        out << YAML::Key << "normalize" << YAML::Value << d.normalize;
        out << YAML::Key << "calibration_samples" << YAML::Value << d.calibration_samples;
        out << YAML::Key << "observables" << YAML::Value << YAML::BeginSeq;
        for (const auto& ch : d.observables) {
            out << YAML::Flow << YAML::BeginMap;
            out << YAML::Key << "coordinate" << YAML::Value << ch.coordinate;
            out << YAML::Key << "gain" << YAML::Value; emit_num(out, ch.gain);
            out << YAML::Key << "bias" << YAML::Value; emit_num(out, ch.bias);
            if (ch.center) { out << YAML::Key << "center" << YAML::Value; emit_num(out, *ch.center); }
            if (ch.scale) { out << YAML::Key << "scale" << YAML::Value; emit_num(out, *ch.scale); }
            out << YAML::EndMap;
        }
        out << YAML::EndSeq;
        if (!d.coefficient_channels.empty()) {
            out << YAML::Key << "coefficient_channels" << YAML::Value << YAML::BeginSeq;
            for (const auto& ch : d.coefficient_channels) {
                out << YAML::Flow << YAML::BeginMap;
                out << YAML::Key << "coordinate" << YAML::Value << ch.coordinate;
                out << YAML::Key << "amplitude" << YAML::Value; emit_num(out, ch.amplitude);
                if (ch.center) { out << YAML::Key << "center" << YAML::Value; emit_num(out, *ch.center); }
                if (ch.scale) { out << YAML::Key << "scale" << YAML::Value; emit_num(out, *ch.scale); }
                out << YAML::EndMap;
            }
            out << YAML::EndSeq;
        }
        out << YAML::EndMap;
    }
    if (c.modes) {
        const auto& m = *c.modes;
        out << YAML::Key << "modes" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "domain" << YAML::Value;
        emit_list(out, m.domain.lengths);
        out << YAML::Key << "periodic" << YAML::Value << m.domain.periodic;
        out << YAML::Key << "max_grad_norm" << YAML::Value; emit_num(out, m.max_grad_norm);
        if (m.generate) {
            out << YAML::Key << "auto" << YAML::Value << YAML::BeginMap;
            out << YAML::Key << "count" << YAML::Value << m.generate->count;
            out << YAML::Key << "max_wavenumber" << YAML::Value << m.generate->max_wavenumber;
            out << YAML::Key << "amplitude" << YAML::Value; emit_num(out, m.generate->amplitude);
            out << YAML::Key << "seed" << YAML::Value << m.generate->seed;
            out << YAML::EndMap;
        } else {
            out << YAML::Key << "list" << YAML::Value << YAML::BeginSeq;
            for (const auto& t : m.list) {
                out << YAML::BeginMap;
                out << YAML::Key << "wavevector" << YAML::Value; emit_vec(out, t.wavevector);
                out << YAML::Key << "phase" << YAML::Value; emit_num(out, t.phase);
                out << YAML::Key << "amplitude" << YAML::Value; emit_num(out, t.amplitude);
                out << YAML::Key << "direction" << YAML::Value; emit_vec(out, t.direction);
                out << YAML::EndMap;
            }
            out << YAML::EndSeq;
        }
        out << YAML::EndMap;
    }
    if (c.velocity) {
        const auto& v = *c.velocity;
        out << YAML::Key << "velocity" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "kind" << YAML::Value << std::string(velocity_kind_name(v.kind));
        switch (v.kind) {
            case VelocityKind::Zero: break;
            case VelocityKind::Uniform: out << YAML::Key << "value" << YAML::Value; emit_vec(out, v.uniform); break;
            case VelocityKind::Shear:
                out << YAML::Key << "amplitude" << YAML::Value; emit_num(out, v.amplitude);
                out << YAML::Key << "wavenumber" << YAML::Value; emit_num(out, v.wavenumber);
                out << YAML::Key << "flow_axis" << YAML::Value << v.flow_axis;
                out << YAML::Key << "gradient_axis" << YAML::Value << v.gradient_axis;
                break;
            case VelocityKind::Cellular:
                out << YAML::Key << "amplitude" << YAML::Value; emit_num(out, v.amplitude);
                out << YAML::Key << "wavenumber" << YAML::Value; emit_num(out, v.wavenumber);
                break;
            case VelocityKind::Rotation:
                out << YAML::Key << "omega" << YAML::Value; emit_num(out, v.amplitude);
                out << YAML::Key << "center" << YAML::Value; emit_vec(out, v.center);
                break;
            case VelocityKind::Linear:
                out << YAML::Key << "matrix" << YAML::Value << YAML::BeginSeq;
                for (int i = 0; i < v.matrix.rows(); ++i) emit_vec(out, v.matrix.row(i).transpose());
                out << YAML::EndSeq;
                break;
        }
        out << YAML::EndMap;
    }
    if (c.integration) {
        const auto& i = *c.integration;
        out << YAML::Key << "integration" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "eps" << YAML::Value; emit_num(out, i.eps);
        out << YAML::Key << "dt_slow" << YAML::Value;
        if (i.dt_slow) emit_num(out, *i.dt_slow); else out << "auto";
        out << YAML::Key << "t_final" << YAML::Value; emit_num(out, i.t_final);
        out << YAML::Key << "output_stride" << YAML::Value << i.output_stride;
        out << YAML::Key << "initial_position" << YAML::Value; emit_vec(out, i.initial_position);
        out << YAML::EndMap;
    }
    if (c.ensemble) {
        out << YAML::Key << "ensemble" << YAML::Value << YAML::BeginMap << YAML::Key << "size" << YAML::Value << *c.ensemble << YAML::EndMap;
    }
    if (c.homogenization) {
        const auto& h = *c.homogenization;
        out << YAML::Key << "homogenization" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "samples" << YAML::Value << h.sampling.samples;
        out << YAML::Key << "stride" << YAML::Value << h.sampling.stride;
        out << YAML::Key << "truncation" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "rule" << YAML::Value << std::string(truncation_kind_name(h.truncation.kind));
        if (h.truncation.kind == TruncationRule::Kind::FixedLag) out << YAML::Key << "lag" << YAML::Value << h.truncation.lag;
        if (h.truncation.kind == TruncationRule::Kind::EfoldMultiple) { out << YAML::Key << "multiple" << YAML::Value; emit_num(out, h.truncation.multiple); }
        out << YAML::EndMap;
        emit_probes(out, h.probes);
        out << YAML::EndMap;
    }
    if (c.sde) {
        const auto& s = *c.sde;
        out << YAML::Key << "sde" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "interpretation" << YAML::Value << std::string(interpretation_name(s.interpretation));
        out << YAML::Key << "dt" << YAML::Value; emit_num(out, s.dt);
        out << YAML::Key << "t_final" << YAML::Value; emit_num(out, s.t_final);
        out << YAML::Key << "ensemble" << YAML::Value << s.ensemble;
        out << YAML::Key << "initial_position" << YAML::Value; emit_vec(out, s.initial_position);
        out << YAML::Key << "coefficients" << YAML::Value << std::string(coefficient_source_name(s.source));
        if (!s.path.empty()) out << YAML::Key << "path" << YAML::Value << s.path;
        out << YAML::EndMap;
    }
    if (c.converge) {
        const auto& v = *c.converge;
        out << YAML::Key << "converge" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "eps_list" << YAML::Value; emit_list(out, v.eps_list);
        out << YAML::Key << "t_final" << YAML::Value; emit_num(out, v.t_final);
        out << YAML::Key << "ensemble" << YAML::Value << v.ensemble;
        out << YAML::Key << "sde_dt" << YAML::Value; emit_num(out, v.sde_dt);
        out << YAML::Key << "reference" << YAML::Value << std::string(coefficient_source_name(v.reference));
        out << YAML::Key << "reference_ensemble" << YAML::Value << v.reference_ensemble;
        out << YAML::Key << "noise_resamples" << YAML::Value << v.noise_resamples;
        out << YAML::Key << "slack" << YAML::Value; emit_num(out, v.slack);
        out << YAML::Key << "variance_tolerance" << YAML::Value; emit_num(out, v.variance_tolerance);
        out << YAML::EndMap;
    }
    if (c.eof) {
        const auto& e = *c.eof;
        out << YAML::Key << "eof" << YAML::Value << YAML::BeginMap;
        if (!e.input.empty()) out << YAML::Key << "input" << YAML::Value << e.input;
        out << YAML::Key << "format" << YAML::Value << e.format;
        out << YAML::Key << "cutoff_period" << YAML::Value; emit_num(out, e.cutoff_period);
        out << YAML::Key << "grid" << YAML::Value; emit_list(out, e.grid);
        out << YAML::Key << "min_count" << YAML::Value << e.min_count;
        out << YAML::Key << "retained" << YAML::Value << e.retained;
        if (!e.planted.empty()) {
            out << YAML::Key << "planted" << YAML::Value << YAML::BeginSeq;
            for (const auto& v : e.planted) emit_vec(out, v);
            out << YAML::EndSeq;
        }
        out << YAML::Key << "max_angle" << YAML::Value; emit_num(out, e.max_angle);
        out << YAML::EndMap;
    }
    if (c.centering) {
        const auto& ce = *c.centering;
        out << YAML::Key << "centering" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "samples" << YAML::Value << ce.sampling.samples;
        out << YAML::Key << "stride" << YAML::Value << ce.sampling.stride;
        emit_probes(out, ce.probes);
        out << YAML::Key << "sigmas" << YAML::Value; emit_num(out, ce.sigmas);
        if (ce.inject_channel) {
            out << YAML::Key << "inject_channel" << YAML::Value << *ce.inject_channel;
            out << YAML::Key << "inject_mean" << YAML::Value; emit_num(out, ce.inject_mean);
        }
        out << YAML::EndMap;
    }
    out << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "dir" << YAML::Value << c.output.dir;
    out << YAML::Key << "trajectories" << YAML::Value << c.output.trajectories;
    out << YAML::Key << "trajectory_format" << YAML::Value << c.output.trajectory_format;
    out << YAML::EndMap;
    out << YAML::EndMap;
    if (!out.good()) raise(ErrorCategory::Internal, kModule, "serialize_config", out.GetLastError());
    return std::string(out.c_str()) + "\n";
}

std::string config_hash(const ExperimentConfig& config) {
    ExperimentConfig identity = config;
    identity.output.dir = ".";
    const std::string text = serialize_config(identity);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace fastslow
