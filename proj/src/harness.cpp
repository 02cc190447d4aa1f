// Copyright 2026 The cbattack Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cbattack/harness.hpp"

#include "cbattack/csv.hpp"
#include "cbattack/errors.hpp"
#include "cbattack/parallel.hpp"
#include "cbattack/rng.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <cinttypes>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <tuple>

namespace cbattack {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads fields of one JSON object, remembering which keys were consumed so
// leftovers can be reported as typos.
class ObjectReader {
public:
    ObjectReader(const json& object, std::string path) : object_(object), path_(std::move(path))
    {
        if (!object_.is_object())
            throw ConfigError(where() + " must be a JSON object");
    }

    bool has(const std::string& key) const { return object_.contains(key); }

    const json& raw(const std::string& key)
    {
        used_.insert(key);
        return object_.at(key);
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    template <class Fn>
    void optional(const std::string& key, Fn&& fn)
    {
        if (has(key))
            fn(raw(key), field(key));
    }

    void finish() const
    {
        for (const auto& [key, value] : object_.items()) {
            if (!used_.contains(key))
                throw ConfigError("unknown config field '" + field(key) + "'");
        }
    }

private:
    std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

    const json& object_;
    std::string path_;
    std::set<std::string> used_;
};

double as_number(const json& v, const std::string& name)
{
    if (!v.is_number())
        throw ConfigError("'" + name + "' must be a number");
    return v.get<double>();
}

std::uint64_t as_unsigned(const json& v, const std::string& name)
{
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        throw ConfigError("'" + name + "' must be a non-negative integer");
    return v.get<std::uint64_t>();
}

bool as_bool(const json& v, const std::string& name)
{
    if (!v.is_boolean())
        throw ConfigError("'" + name + "' must be true or false");
    return v.get<bool>();
}

std::string as_string(const json& v, const std::string& name)
{
    if (!v.is_string())
        throw ConfigError("'" + name + "' must be a string");
    return v.get<std::string>();
}

FeatureFormat parse_format(const std::string& s, const std::string& name)
{
    if (s == "csv")
        return FeatureFormat::csv;
    if (s == "binary")
        return FeatureFormat::binary;
    throw ConfigError("'" + name + "' must be csv or binary, got '" + s + "'");
}

void read_ga(ObjectReader r, opt::GaConfig& ga)
{
    r.optional("population_size", [&](const json& v, const std::string& n) { ga.population_size = as_unsigned(v, n); });
    r.optional("max_generations", [&](const json& v, const std::string& n) { ga.max_generations = as_unsigned(v, n); });
    r.optional("elite_fraction", [&](const json& v, const std::string& n) { ga.elite_fraction = as_number(v, n); });
    r.optional("crossover_fraction", [&](const json& v, const std::string& n) { ga.crossover_fraction = as_number(v, n); });
    r.optional("mutation_scale", [&](const json& v, const std::string& n) { ga.mutation_scale = as_number(v, n); });
    r.optional("stall_generations", [&](const json& v, const std::string& n) { ga.stall_generations = as_unsigned(v, n); });
    r.optional("function_tolerance", [&](const json& v, const std::string& n) { ga.function_tolerance = as_number(v, n); });
    r.finish();
}

json ga_json(const opt::GaConfig& ga)
{
    return json{{"population_size", ga.population_size},
                {"max_generations", ga.max_generations},
                {"elite_fraction", ga.elite_fraction},
                {"crossover_fraction", ga.crossover_fraction},
                {"mutation_scale", ga.mutation_scale},
                {"stall_generations", ga.stall_generations},
                {"function_tolerance", ga.function_tolerance}};
}

std::string hex64(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out)
{
    std::ofstream out(path, mode | std::ios::binary);
    if (!out)
        throw Error("cannot write " + path.string());
    return out;
}

void write_text(const fs::path& path, const std::string& text)
{
    auto out = open_out(path);
    out << text;
    if (!out)
        throw Error("write failed: " + path.string());
}

SchemeConfig scheme_for(const RunConfig& config, Eigen::Index l)
{
    SchemeConfig s = config.experiment.scheme;
    s.l = l;
    return s;
}

Eigen::Index effective_k(const RunConfig& config)
{
    return config.experiment.scheme.scheme == Scheme::iom ? config.experiment.scheme.k : 2;
}

std::string trace_name(AttackKind attack, Eigen::Index l, const std::string& subject_id)
{
    return to_string(attack) + "_L" + std::to_string(l) + "_" + subject_id + ".csv";
}

using TargetKey = std::tuple<Eigen::Index, AttackKind, std::string>;

bool matches(const PreimageRecord& r, const RunConfig& config)
{
    return r.scheme == config.experiment.scheme.scheme && r.k == effective_k(config) &&
           r.seed == optimizer_seed(config.experiment.master_seed, r.attack, r.l, r.subject_id);
}

// Config order for L and attack, dataset order for subjects.
std::vector<PreimageRecord> ordered_records(std::vector<PreimageRecord> records, const RunConfig& config,
                                            const ProtocolSplit& split)
{
    const auto index_of = [](const auto& list, const auto& value) {
        return static_cast<std::size_t>(std::find(list.begin(), list.end(), value) - list.begin());
    };
    std::sort(records.begin(), records.end(), [&](const PreimageRecord& a, const PreimageRecord& b) {
        const auto ka = std::make_tuple(index_of(config.experiment.l_values, a.l),
                                        index_of(config.experiment.attacks, a.attack),
                                        index_of(split.subject_ids, a.subject_id));
        const auto kb = std::make_tuple(index_of(config.experiment.l_values, b.l),
                                        index_of(config.experiment.attacks, b.attack),
                                        index_of(split.subject_ids, b.subject_id));
        return ka < kb;
    });
    return records;
}

} // namespace

RunConfig parse_run_config(std::string_view json_text)
{
    json root;
    try {
        root = json::parse(json_text.begin(), json_text.end());
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }

    RunConfig c;
    ExperimentConfig& x = c.experiment;
    ObjectReader r(root, "");

    if (!r.has("dataset"))
        throw ConfigError("missing config field 'dataset'");
    {
        ObjectReader d(r.raw("dataset"), "dataset");
        d.optional("path", [&](const json& v, const std::string& n) { c.dataset.path = as_string(v, n); });
        d.optional("format", [&](const json& v, const std::string& n) { c.dataset.format = parse_format(as_string(v, n), n); });
        d.optional("synthetic", [&](const json& v, const std::string& n) {
            ObjectReader s(v, n);
            SyntheticSpec spec;
            s.optional("n_subjects", [&](const json& w, const std::string& m) { spec.n_subjects = as_unsigned(w, m); });
            s.optional("samples_per_subject",
                       [&](const json& w, const std::string& m) { spec.samples_per_subject = as_unsigned(w, m); });
            s.optional("dimension", [&](const json& w, const std::string& m) {
                spec.dimension = static_cast<Eigen::Index>(as_unsigned(w, m));
            });
            s.optional("within_class_noise",
                       [&](const json& w, const std::string& m) { spec.within_class_noise = as_number(w, m); });
            s.optional("seed", [&](const json& w, const std::string& m) { spec.seed = as_unsigned(w, m); });
            s.finish();
            c.dataset.synthetic = spec;
        });
        d.finish();
        if (c.dataset.path.empty() == !c.dataset.synthetic.has_value())
            throw ConfigError("'dataset' needs exactly one of 'dataset.path' or 'dataset.synthetic'");
    }

    r.optional("scheme", [&](const json& v, const std::string& n) { x.scheme.scheme = parse_scheme(as_string(v, n)); });
    r.optional("K", [&](const json& v, const std::string& n) {
        x.scheme.k = static_cast<Eigen::Index>(as_unsigned(v, n));
    });
    r.optional("L", [&](const json& v, const std::string& n) {
        if (!v.is_array() || v.empty())
            throw ConfigError("'" + n + "' must be a non-empty list of code lengths");
        x.l_values.clear();
        for (const auto& e : v) {
            const auto l = static_cast<Eigen::Index>(as_unsigned(e, n));
            if (l < 1)
                throw ConfigError("'" + n + "' entries must be at least 1");
            if (std::find(x.l_values.begin(), x.l_values.end(), l) != x.l_values.end())
                throw ConfigError("'" + n + "' lists L=" + std::to_string(l) + " twice");
            x.l_values.push_back(l);
        }
    });
    r.optional("tau", [&](const json& v, const std::string& n) { x.scheme.tau = as_number(v, n); });
    r.optional("orthonormalize", [&](const json& v, const std::string& n) { x.scheme.orthonormalize = as_bool(v, n); });
    r.optional("margin", [&](const json& v, const std::string& n) { x.margin = as_number(v, n); });
    r.optional("attacks", [&](const json& v, const std::string& n) {
        if (!v.is_array() || v.empty())
            throw ConfigError("'" + n + "' must be a non-empty list of attack names");
        x.attacks.clear();
        for (const auto& e : v) {
            const auto a = parse_attack(as_string(e, n));
            if (std::find(x.attacks.begin(), x.attacks.end(), a) != x.attacks.end())
                throw ConfigError("'" + n + "' lists " + to_string(a) + " twice");
            x.attacks.push_back(a);
        }
    });
    r.optional("ga", [&](const json& v, const std::string& n) { read_ga(ObjectReader(v, n), x.ga); });
    x.alga.ga = x.ga;
    r.optional("alga", [&](const json& v, const std::string& n) {
        ObjectReader a(v, n);
        a.optional("tau1", [&](const json& w, const std::string& m) { x.alga.tau1 = as_number(w, m); });
        a.optional("tau2", [&](const json& w, const std::string& m) { x.alga.tau2 = as_number(w, m); });
        a.optional("initial_penalty", [&](const json& w, const std::string& m) { x.alga.initial_penalty = as_number(w, m); });
        a.optional("penalty_growth", [&](const json& w, const std::string& m) { x.alga.penalty_growth = as_number(w, m); });
        a.optional("initial_multiplier",
                   [&](const json& w, const std::string& m) { x.alga.initial_multiplier = as_number(w, m); });
        a.optional("initial_feasibility_tolerance",
                   [&](const json& w, const std::string& m) { x.alga.initial_feasibility_tolerance = as_number(w, m); });
        a.optional("max_outer_iterations",
                   [&](const json& w, const std::string& m) { x.alga.max_outer_iterations = as_unsigned(w, m); });
        a.optional("ga", [&](const json& w, const std::string& m) { read_ga(ObjectReader(w, m), x.alga.ga); });
        a.finish();
    });
    r.optional("n_reps", [&](const json& v, const std::string& n) {
        x.n_reps = as_unsigned(v, n);
        if (x.n_reps < 1)
            throw ConfigError("'" + n + "' must be at least 1");
    });
    r.optional("master_seed", [&](const json& v, const std::string& n) { x.master_seed = as_unsigned(v, n); });
    r.optional("jobs", [&](const json& v, const std::string& n) {
        x.jobs = as_unsigned(v, n);
        if (x.jobs < 1)
            throw ConfigError("'" + n + "' must be at least 1");
    });
    r.optional("output_dir", [&](const json& v, const std::string& n) { c.output_dir = as_string(v, n); });
    r.optional("report_timing", [&](const json& v, const std::string& n) { c.report_timing = as_bool(v, n); });
    r.finish();

    if (x.scheme.scheme == Scheme::iom && x.scheme.k < 2)
        throw ConfigError("'K' must be at least 2");
    if (!(x.margin >= 0.0))
        throw ConfigError("'margin' must be >= 0");
    if (!std::isfinite(x.scheme.tau))
        throw ConfigError("'tau' must be finite");
    try {
        x.ga.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("'ga': ") + e.what());
    }
    try {
        x.alga.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("'alga': ") + e.what());
    }
    return c;
}

RunConfig load_run_config(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot read config file " + path.string());
    std::stringstream text;
    text << in.rdbuf();
    return parse_run_config(text.str());
}

std::string to_json(const RunConfig& c, int indent)
{
    const ExperimentConfig& x = c.experiment;
    json dataset;
    if (c.dataset.synthetic) {
        const auto& s = *c.dataset.synthetic;
        dataset["synthetic"] = json{{"n_subjects", s.n_subjects},
                                    {"samples_per_subject", s.samples_per_subject},
                                    {"dimension", s.dimension},
                                    {"within_class_noise", s.within_class_noise},
                                    {"seed", s.seed}};
    } else {
        dataset["path"] = c.dataset.path.string();
        dataset["format"] = c.dataset.format == FeatureFormat::csv ? "csv" : "binary";
    }
    json attacks = json::array();
    for (const auto a : x.attacks)
        attacks.push_back(to_string(a));
    json alga{{"tau1", x.alga.tau1},
              {"tau2", x.alga.tau2},
              {"initial_penalty", x.alga.initial_penalty},
              {"penalty_growth", x.alga.penalty_growth},
              {"initial_multiplier", x.alga.initial_multiplier},
              {"initial_feasibility_tolerance", x.alga.initial_feasibility_tolerance},
              {"max_outer_iterations", x.alga.max_outer_iterations},
              {"ga", ga_json(x.alga.ga)}};
    json root{{"dataset", dataset},
              {"scheme", to_string(x.scheme.scheme)},
              {"K", x.scheme.k},
              {"L", x.l_values},
              {"tau", x.scheme.tau},
              {"orthonormalize", x.scheme.orthonormalize},
              {"margin", x.margin},
              {"attacks", attacks},
              {"ga", ga_json(x.ga)},
              {"alga", alga},
              {"n_reps", x.n_reps},
              {"master_seed", x.master_seed},
              {"jobs", x.jobs},
              {"output_dir", c.output_dir.string()},
              {"report_timing", c.report_timing}};
    return root.dump(indent) + (indent >= 0 ? "\n" : "");
}

FeatureSet load_dataset(const RunConfig& config)
{
    if (config.dataset.synthetic)
        return generate_synthetic(*config.dataset.synthetic);
    return load_features(config.dataset.path, config.dataset.format);
}

std::string preimage_csv_header(Eigen::Index dimension)
{
    std::string h = "subject_id,scheme,K,L,seed,attack,converged,final_loss,final_violation,generations,"
                    "outer_iterations,time_s";
    for (Eigen::Index i = 0; i < dimension; ++i)
        h += ",x" + std::to_string(i);
    return h;
}

std::string preimage_csv_row(const PreimageRecord& r)
{
    std::string s = r.subject_id + ',' + to_string(r.scheme) + ',' + std::to_string(r.k) + ',' + std::to_string(r.l) +
                    ',' + std::to_string(r.seed) + ',' + to_string(r.attack) + ',' + (r.converged ? "1" : "0") + ',' +
                    csv::format_double(r.final_loss) + ',' + csv::format_double(r.final_violation) + ',' +
                    std::to_string(r.generations) + ',' + std::to_string(r.outer_iterations) + ',' +
                    csv::format_double(r.time_s);
    for (double v : r.x)
        s += ',' + csv::format_double(v);
    return s;
}

std::vector<PreimageRecord> read_preimages(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IngestionError("cannot read " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    std::vector<PreimageRecord> records;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    Eigen::Index dim = -1;
    while (pos < text.size()) {
        const auto end = text.find('\n', pos);
        if (end == std::string::npos)
            break; // truncated by an interrupted writer
        const std::string_view line = csv::chomp(std::string_view(text).substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        const auto fail = [&](const std::string& what) {
            return IngestionError(path.string() + ":" + std::to_string(line_no) + ": " + what);
        };
        const auto cells = csv::split(line);
        if (line_no == 1) {
            if (cells.size() < 13)
                throw fail("preimage header has no feature columns");
            dim = static_cast<Eigen::Index>(cells.size() - 12);
            if (line != preimage_csv_header(dim))
                throw fail("unexpected preimage header");
            continue;
        }
        if (line.empty())
            continue;
        if (static_cast<Eigen::Index>(cells.size()) != dim + 12)
            throw fail("expected " + std::to_string(dim + 12) + " columns, got " + std::to_string(cells.size()));
        PreimageRecord r;
        long long k = 0, l = 0, gens = 0, outer = 0;
        r.subject_id = std::string(cells[0]);
        try {
            r.scheme = parse_scheme(std::string(cells[1]));
            r.attack = parse_attack(std::string(cells[5]));
        } catch (const ConfigError& e) {
            throw fail(e.what());
        }
        if (!csv::parse_int(cells[2], k) || !csv::parse_int(cells[3], l) || !csv::parse_int(cells[9], gens) ||
            !csv::parse_int(cells[10], outer) || k < 0 || l < 1 || gens < 0 || outer < 0)
            throw fail("bad integer field");
        r.k = k;
        r.l = l;
        r.generations = static_cast<std::size_t>(gens);
        r.outer_iterations = static_cast<std::size_t>(outer);
        const std::string seed_text(cells[4]);
        std::size_t used = 0;
        try {
            r.seed = std::stoull(seed_text, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != seed_text.size() || seed_text.empty() || seed_text[0] == '-')
            throw fail("bad seed '" + seed_text + "'");
        if (cells[6] != "0" && cells[6] != "1")
            throw fail("converged must be 0 or 1");
        r.converged = cells[6] == "1";
        if (!csv::parse_double(cells[7], r.final_loss) || !csv::parse_double(cells[8], r.final_violation) ||
            !csv::parse_double(cells[11], r.time_s))
            throw fail("bad numeric field");
        r.x.resize(dim);
        for (Eigen::Index i = 0; i < dim; ++i) {
            if (!csv::parse_double(cells[12 + i], r.x[i]) || !std::isfinite(r.x[i]))
                throw fail("bad feature value in column x" + std::to_string(i));
        }
        records.push_back(std::move(r));
    }
    return records;
}

void write_preimages(const std::vector<PreimageRecord>& records, const fs::path& path)
{
    if (records.empty())
        throw Error("no preimages to write");
    std::string text = preimage_csv_header(records.front().x.size()) + '\n';
    for (const auto& r : records)
        text += preimage_csv_row(r) + '\n';
    // Replace atomically so an interrupt never leaves a half-written file.
    const fs::path tmp = path.string() + ".tmp";
    write_text(tmp, text);
    fs::rename(tmp, path);
}

std::string sha256_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot read " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("SHA-256 unavailable");
    }
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        if (in.gcount() > 0)
            EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    static const char* digits = "0123456789abcdef";
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) {
        hex += digits[md[i] >> 4];
        hex += digits[md[i] & 15];
    }
    return hex;
}

void run_hash(const RunConfig& config, std::ostream& log)
{
    const FeatureSet dataset = load_dataset(config);
    const ProtocolSplit split = split_protocol(dataset);
    fs::create_directories(config.output_dir);

    std::string calibration = "L,token_seed,theta,theta_sq,eer,fmr,fnmr\n";
    for (const auto l : config.experiment.l_values) {
        const auto token = attack_token_seed(config.experiment.master_seed, l);
        const SchemeParams params = derive_params(scheme_for(config, l), split.dimension, token);

        std::string hashes = "subject_id";
        for (Eigen::Index i = 0; i < l; ++i)
            hashes += ",h" + std::to_string(i);
        hashes += '\n';
        for (std::size_t s = 0; s < split.subject_count(); ++s) {
            hashes += split.subject_ids[s];
            for (int code : transform(params, split.enroll[s]).codes)
                hashes += ',' + std::to_string(code);
            hashes += '\n';
        }
        write_text(config.output_dir / ("hashes_L" + std::to_string(l) + ".csv"), hashes);

        const ScoreLists scores = score_population(split, params);
        write_scores_csv(scores, config.output_dir / ("scores_L" + std::to_string(l) + ".csv"));
        const auto cal = calibrate_threshold(scores.genuine, scores.impostor);
        calibration += std::to_string(l) + ',' + std::to_string(token) + ',' + csv::format_double(cal.theta) + ',' +
                       csv::format_double(cal.theta_squared) + ',' + csv::format_double(cal.eer) + ',' +
                       csv::format_double(cal.fmr_at_theta) + ',' + csv::format_double(cal.fnmr_at_theta) + '\n';
        log << "hash: L=" << l << " eer=" << cal.eer << " theta=" << cal.theta << '\n';
    }
    write_text(config.output_dir / "calibration.csv", calibration);
}

std::size_t run_attack(const RunConfig& config, std::ostream& log)
{
    const ExperimentConfig& x = config.experiment;
    const FeatureSet dataset = load_dataset(config);
    const ProtocolSplit split = split_protocol(dataset);
    const fs::path out_dir = config.output_dir;
    const fs::path preimage_path = out_dir / "preimages.csv";
    fs::create_directories(out_dir / "traces");

    std::vector<PreimageRecord> done;
    std::set<TargetKey> have;
    if (fs::exists(preimage_path)) {
        std::size_t stale = 0;
        for (auto& r : read_preimages(preimage_path)) {
            const bool wanted = std::find(x.l_values.begin(), x.l_values.end(), r.l) != x.l_values.end() &&
                                std::find(x.attacks.begin(), x.attacks.end(), r.attack) != x.attacks.end() &&
                                std::find(split.subject_ids.begin(), split.subject_ids.end(), r.subject_id) !=
                                    split.subject_ids.end();
            if (!wanted || !matches(r, config) || r.x.size() != split.dimension ||
                !have.insert({r.l, r.attack, r.subject_id}).second) {
                ++stale;
                continue;
            }
            done.push_back(std::move(r));
        }
        if (stale > 0)
            log << "attack: dropping " << stale << " preimage row(s) that do not belong to this config\n";
        if (!done.empty())
            log << "attack: resuming, " << done.size() << " preimage(s) already present\n";
    }
    // Rewrite so the append below starts from a clean file.
    if (!done.empty())
        write_preimages(ordered_records(done, config, split), preimage_path);
    else
        write_text(preimage_path, preimage_csv_header(split.dimension) + '\n');

    struct Task {
        Eigen::Index l;
        AttackKind attack;
        std::size_t subject;
    };
    std::vector<Task> tasks;
    for (const auto l : x.l_values) {
        for (const auto attack : x.attacks) {
            for (std::size_t s = 0; s < split.subject_count(); ++s) {
                if (!have.contains({l, attack, split.subject_ids[s]}))
                    tasks.push_back({l, attack, s});
            }
        }
    }

    std::map<Eigen::Index, SchemeParams> params;
    for (const auto l : x.l_values)
        params.emplace(l, derive_params(scheme_for(config, l), split.dimension, attack_token_seed(x.master_seed, l)));

    std::mutex collector;
    std::ofstream append = open_out(preimage_path, std::ios::app);
    std::size_t finished = 0;
    parallel_for(tasks.size(), x.jobs, [&](std::size_t t) {
        const Task& task = tasks[t];
        const auto& id = split.subject_ids[task.subject];
        const SchemeParams& p = params.at(task.l);
        const AttackTarget target(p, transform(p, split.enroll[task.subject]), x.margin);
        const auto seed = optimizer_seed(x.master_seed, task.attack, task.l, id);
        AttackOutcome outcome;
        if (task.attack == AttackKind::gasa) {
            opt::GaConfig ga = x.ga;
            ga.seed = seed;
            outcome = gasa(target, ga);
        } else {
            opt::AlgaConfig alga = x.alga;
            alga.ga.seed = seed;
            outcome = csa(target, alga);
        }
        PreimageRecord r{id,
                         x.scheme.scheme,
                         effective_k(config),
                         task.l,
                         seed,
                         task.attack,
                         outcome.converged,
                         outcome.final_loss,
                         outcome.final_violation,
                         outcome.trace.generations,
                         outcome.trace.outer_iterations,
                         outcome.trace.wall_time_s,
                         outcome.preimage};

        const std::lock_guard lock(collector);
        opt::write_trace_csv(outcome.trace, out_dir / "traces" / trace_name(task.attack, task.l, id));
        append << preimage_csv_row(r) << '\n' << std::flush;
        if (!append)
            throw Error("write failed: " + preimage_path.string());
        ++finished;
        log << "attack: [" << finished << '/' << tasks.size() << "] " << to_string(task.attack) << " L=" << task.l
            << ' ' << id << " loss=" << outcome.final_loss << " converged=" << outcome.converged << '\n';
        done.push_back(std::move(r));
    });
    append.close();

    write_preimages(ordered_records(std::move(done), config, split), preimage_path);
    return tasks.size();
}

ExperimentReport run_evaluate(const RunConfig& config, std::ostream& log)
{
    const ExperimentConfig& x = config.experiment;
    const FeatureSet dataset = load_dataset(config);
    const ProtocolSplit split = split_protocol(dataset);
    const fs::path out_dir = config.output_dir;
    const fs::path preimage_path = out_dir / "preimages.csv";
    if (!fs::exists(preimage_path))
        throw Error("no preimages at " + preimage_path.string() + "; run the attack phase first");
    if (x.n_reps == 1)
        log << "warning: n_reps=1, VAR is computed over a single repetition\n";

    std::vector<PreimageRecord> records;
    for (auto& r : read_preimages(preimage_path)) {
        if (matches(r, config) && r.x.size() == split.dimension)
            records.push_back(std::move(r));
    }

    ExperimentReport report;
    report.master_seed = x.master_seed;
    report.dataset_digest = digest(dataset);

    std::string trend = "attack,L,tee,tre,var\n";
    std::string subject_errors = "attack,L,subject_id,repetition,train_distance,test_distance\n";
    std::string timing = "attack,L,subject_id,generations,outer_iterations,time_s\n";
    json seeds = json::object();

    for (const auto l : x.l_values) {
        std::vector<VerificationRound> rounds;
        std::string round_error;
        try {
            rounds = make_verification_rounds(split, scheme_for(config, l), x.master_seed, x.n_reps);
        } catch (const Error& e) {
            round_error = e.what();
        }
        json verify = json::array();
        for (const auto& round : rounds)
            verify.push_back(round.token_seed);
        seeds[std::to_string(l)] = json{{"attack_token", attack_token_seed(x.master_seed, l)}, {"verify_tokens", verify}};

        for (const auto attack : x.attacks) {
            ReportRow row;
            row.scheme = x.scheme.scheme;
            row.k = effective_k(config);
            row.l = l;
            row.attack = attack;
            std::map<std::string, FeatureVector> preimages;
            std::vector<const PreimageRecord*> used;
            for (const auto& r : records) {
                if (r.l == l && r.attack == attack && preimages.emplace(r.subject_id, r.x).second)
                    used.push_back(&r);
            }
            try {
                if (!round_error.empty())
                    throw Error(round_error);
                std::vector<SubjectErrors> errors;
                row = make_report_row(split, x, l, attack, preimages, rounds, &errors);
                std::vector<double> gens, times;
                std::size_t converged = 0;
                for (const auto* r : used) {
                    gens.push_back(static_cast<double>(attack == AttackKind::csa ? r->outer_iterations : r->generations));
                    times.push_back(r->time_s);
                    converged += r->converged;
                }
                std::sort(gens.begin(), gens.end());
                std::sort(times.begin(), times.end());
                double gsum = 0.0, tsum = 0.0;
                for (double g : gens)
                    gsum += g;
                for (double t : times)
                    tsum += t;
                // Only preimages of subjects in the split reach this point.
                row.mean_generations = gsum / static_cast<double>(gens.size());
                row.mean_time_s = tsum / static_cast<double>(times.size());
                row.convergence_rate = static_cast<double>(converged) / static_cast<double>(used.size());

                trend += to_string(attack) + ',' + std::to_string(l) + ',' + csv::format_double(row.metrics.tee) + ',' +
                         csv::format_double(row.metrics.tre) + ',' + csv::format_double(row.metrics.var) + '\n';
                for (const auto& e : errors) {
                    for (std::size_t rep = 0; rep < e.test_distances.size(); ++rep) {
                        subject_errors += to_string(attack) + ',' + std::to_string(l) + ',' + e.subject_id + ',' +
                                          std::to_string(rep) + ',' + csv::format_double(e.train_distance) + ',' +
                                          csv::format_double(e.test_distances[rep]) + '\n';
                    }
                }
                for (const auto* r : used) {
                    timing += to_string(attack) + ',' + std::to_string(l) + ',' + r->subject_id + ',' +
                              std::to_string(r->generations) + ',' + std::to_string(r->outer_iterations) + ',' +
                              csv::format_double(r->time_s) + '\n';
                }
                log << "evaluate: " << to_string(attack) << " L=" << l << " sar=" << row.metrics.sar
                    << " fai=" << row.metrics.fai << " tee=" << row.metrics.tee << '\n';
            } catch (const Error& e) {
                row.error = e.what();
                log << "evaluate: " << to_string(attack) << " L=" << l << " failed: " << e.what() << '\n';
            }
            report.rows.push_back(row);
        }
    }

    write_text(out_dir / "report.csv", report_csv(report, config.report_timing));
    write_text(out_dir / "error_trend.csv", trend);
    write_text(out_dir / "subject_errors.csv", subject_errors);
    write_text(out_dir / "timing.csv", timing);

    json errors = json::array();
    for (const auto& row : report.rows) {
        if (!row.error.empty())
            errors.push_back(json{{"L", row.l}, {"attack", to_string(row.attack)}, {"error", row.error}});
    }
    json outputs = json::object();
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
        if (entry.is_regular_file() && entry.path().filename() != "manifest.json")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files)
        outputs[fs::relative(f, out_dir).generic_string()] = sha256_file(f);
    const json manifest{{"config", json::parse(to_json(config))},
                        {"master_seed", x.master_seed},
                        {"dataset_digest", hex64(report.dataset_digest)},
                        {"seed_derivation", "cbkdf-v1"},
                        {"random_stream", "cbrng-v1"},
                        {"seeds", seeds},
                        {"row_errors", errors},
                        {"outputs", outputs}};
    write_text(out_dir / "manifest.json", manifest.dump(2) + '\n');
    return report;
}

int run_command(std::string_view command, const fs::path& config_path, std::optional<std::size_t> jobs,
                std::optional<fs::path> out_dir, std::ostream& log)
{
    try {
        RunConfig config = load_run_config(config_path);
        if (jobs) {
            if (*jobs < 1)
                throw ConfigError("--jobs must be at least 1");
            config.experiment.jobs = *jobs;
        }
        if (out_dir)
            config.output_dir = *out_dir;
        if (command == "hash") {
            run_hash(config, log);
        } else if (command == "attack") {
            const auto n = run_attack(config, log);
            log << "attack: " << n << " target(s) attacked\n";
        } else if (command == "evaluate") {
            const auto report = run_evaluate(config, log);
            for (const auto& row : report.rows) {
                if (!row.error.empty())
                    return 2;
            }
        } else {
            throw ConfigError("unknown command '" + std::string(command) + "' (expected hash, attack or evaluate)");
        }
        return 0;
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
        return 2;
    }
}

} // namespace cbattack
