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

#include "cbattack/dataset.hpp"

#include "cbattack/csv.hpp"
#include "cbattack/errors.hpp"
#include "cbattack/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace cbattack {

namespace {

constexpr char kBinaryMagic[4] = {'C', 'B', 'F', '1'};

std::uint64_t to_little(std::uint64_t v)
{
    if constexpr (std::endian::native == std::endian::little)
        return v;
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i)
        r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
}

void write_u32(std::ostream& out, std::uint32_t v)
{
    const unsigned char bytes[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                    static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
}

void write_f64(std::ostream& out, double v)
{
    const auto bits = to_little(std::bit_cast<std::uint64_t>(v));
    char bytes[8];
    std::memcpy(bytes, &bits, 8);
    out.write(bytes, 8);
}

std::uint32_t read_u32(std::istream& in, const char* what)
{
    unsigned char bytes[4];
    if (!in.read(reinterpret_cast<char*>(bytes), 4))
        throw IngestionError(std::string("truncated binary feature file while reading ") + what);
    return std::uint32_t(bytes[0]) | std::uint32_t(bytes[1]) << 8 | std::uint32_t(bytes[2]) << 16 |
           std::uint32_t(bytes[3]) << 24;
}

double read_f64(std::istream& in, const std::string& record)
{
    char bytes[8];
    if (!in.read(bytes, 8))
        throw IngestionError("truncated binary feature file in " + record);
    std::uint64_t bits;
    std::memcpy(&bits, bytes, 8);
    return std::bit_cast<double>(to_little(bits));
}

FeatureVector checked_normalize(const FeatureVector& v, const std::string& record)
{
    if (!v.allFinite())
        throw IngestionError("non-finite value in " + record);
    try {
        return normalize(v);
    } catch (const NormalizationError&) {
        throw NormalizationError("zero-norm vector in " + record);
    }
}

FeatureSet load_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IngestionError("cannot open feature file " + path.string());

    std::string line;
    if (!std::getline(in, line))
        throw IngestionError("empty feature file " + path.string());
    const auto header = csv::split(csv::chomp(line));
    if (header.size() < 3 || header[0] != "subject_id" || header[1] != "sample_idx")
        throw IngestionError("bad header in " + path.string() + ": expected subject_id,sample_idx,f0,...");
    const auto dim = static_cast<Eigen::Index>(header.size() - 2);
    for (Eigen::Index j = 0; j < dim; ++j) {
        if (header[j + 2] != "f" + std::to_string(j))
            throw IngestionError("bad header column '" + std::string(header[j + 2]) + "' in " + path.string());
    }

    std::vector<std::string> order;
    std::map<std::string, std::vector<std::pair<long long, FeatureVector>>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = csv::chomp(line);
        if (text.empty())
            continue;
        const std::string record = path.filename().string() + " line " + std::to_string(line_no);
        const auto fields = csv::split(text);
        if (static_cast<Eigen::Index>(fields.size()) != dim + 2) {
            throw IngestionError("dimension mismatch in " + record + ": expected " + std::to_string(dim) +
                                 " features, found " + std::to_string(static_cast<long long>(fields.size()) - 2));
        }
        long long idx = 0;
        if (!csv::parse_int(fields[1], idx) || idx < 0)
            throw IngestionError("malformed sample_idx in " + record);
        FeatureVector v(dim);
        for (Eigen::Index j = 0; j < dim; ++j) {
            if (!csv::parse_double(fields[j + 2], v[j]))
                throw IngestionError("malformed value '" + std::string(fields[j + 2]) + "' in " + record);
        }
        std::string id(fields[0]);
        if (id.empty())
            throw IngestionError("empty subject_id in " + record);
        auto [it, inserted] = rows.try_emplace(id);
        if (inserted)
            order.push_back(id);
        for (const auto& [existing, _] : it->second) {
            if (existing == idx)
                throw IngestionError("duplicate sample_idx " + std::to_string(idx) + " for subject " + id + " in " + record);
        }
        it->second.emplace_back(idx, checked_normalize(v, record));
    }

    std::vector<Subject> subjects;
    subjects.reserve(order.size());
    for (const auto& id : order) {
        auto& samples = rows[id];
        std::stable_sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        Subject s{id, {}};
        for (auto& [_, v] : samples)
            s.samples.push_back(std::move(v));
        subjects.push_back(std::move(s));
    }
    if (subjects.empty())
        throw IngestionError("no samples in " + path.string());
    return FeatureSet(std::move(subjects), dim);
}

FeatureSet load_binary(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IngestionError("cannot open feature file " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kBinaryMagic, 4) != 0)
        throw IngestionError("bad magic in " + path.string() + " (expected CBF1)");
    const auto dim = static_cast<Eigen::Index>(read_u32(in, "dimension"));
    const auto count = read_u32(in, "subject count");
    if (dim == 0)
        throw IngestionError("zero dimension in " + path.string());

    std::vector<Subject> subjects;
    subjects.reserve(count);
    for (std::uint32_t s = 0; s < count; ++s) {
        const auto len = read_u32(in, "subject id length");
        std::string id(len, '\0');
        if (!in.read(id.data(), len))
            throw IngestionError("truncated subject id for subject #" + std::to_string(s));
        const auto n_samples = read_u32(in, "sample count");
        Subject subject{id, {}};
        subject.samples.reserve(n_samples);
        for (std::uint32_t i = 0; i < n_samples; ++i) {
            const std::string record = "subject " + id + " sample " + std::to_string(i);
            FeatureVector v(dim);
            for (Eigen::Index j = 0; j < dim; ++j)
                v[j] = read_f64(in, record);
            subject.samples.push_back(checked_normalize(v, record));
        }
        subjects.push_back(std::move(subject));
    }
    if (in.peek() != std::char_traits<char>::eof())
        throw IngestionError("trailing bytes in " + path.string());
    return FeatureSet(std::move(subjects), dim);
}

} // namespace

FeatureSet::FeatureSet(std::vector<Subject> subjects, Eigen::Index dimension)
    : subjects_(std::move(subjects)), dimension_(dimension)
{
    if (dimension_ < 1)
        throw DimensionError("feature dimension must be positive");
    for (const auto& s : subjects_) {
        if (s.samples.empty())
            throw IngestionError("subject " + s.id + " has no samples");
        for (std::size_t i = 0; i < s.samples.size(); ++i) {
            if (s.samples[i].size() != dimension_) {
                throw DimensionError("subject " + s.id + " sample " + std::to_string(i) + " has dimension " +
                                     std::to_string(s.samples[i].size()) + ", expected " + std::to_string(dimension_));
            }
            if (!s.samples[i].allFinite())
                throw IngestionError("non-finite value in subject " + s.id + " sample " + std::to_string(i));
        }
    }
}

std::size_t FeatureSet::total_samples() const noexcept
{
    std::size_t n = 0;
    for (const auto& s : subjects_)
        n += s.samples.size();
    return n;
}

bool FeatureSet::operator==(const FeatureSet& other) const
{
    if (dimension_ != other.dimension_ || subjects_.size() != other.subjects_.size())
        return false;
    for (std::size_t i = 0; i < subjects_.size(); ++i) {
        const auto& a = subjects_[i];
        const auto& b = other.subjects_[i];
        if (a.id != b.id || a.samples.size() != b.samples.size())
            return false;
        for (std::size_t j = 0; j < a.samples.size(); ++j) {
            if (a.samples[j] != b.samples[j])
                return false;
        }
    }
    return true;
}

std::size_t ProtocolSplit::verify_count() const noexcept
{
    std::size_t n = 0;
    for (const auto& v : verify)
        n += v.size();
    return n;
}

FeatureVector normalize(const FeatureVector& v)
{
    const double norm = v.norm();
    if (!(norm > 0.0) || !std::isfinite(norm))
        throw NormalizationError("cannot normalize a zero-norm or non-finite vector");
    if (std::abs(norm - 1.0) <= 1e-12)
        return v;
    return v / norm;
}

FeatureSet load_features(const std::filesystem::path& path, FeatureFormat format)
{
    return format == FeatureFormat::csv ? load_csv(path) : load_binary(path);
}

void save_features(const FeatureSet& set, const std::filesystem::path& path, FeatureFormat format)
{
    if (format == FeatureFormat::csv) {
        std::ofstream out(path);
        if (!out)
            throw IngestionError("cannot write " + path.string());
        out << "subject_id,sample_idx";
        for (Eigen::Index j = 0; j < set.dimension(); ++j)
            out << ",f" << j;
        out << '\n';
        for (const auto& s : set.subjects()) {
            if (s.id.find(',') != std::string::npos || s.id.find('\n') != std::string::npos)
                throw IngestionError("subject id '" + s.id + "' cannot be written to CSV");
            for (std::size_t i = 0; i < s.samples.size(); ++i) {
                out << s.id << ',' << i;
                for (double x : s.samples[i])
                    out << ',' << csv::format_double(x);
                out << '\n';
            }
        }
        return;
    }

    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IngestionError("cannot write " + path.string());
    out.write(kBinaryMagic, 4);
    write_u32(out, static_cast<std::uint32_t>(set.dimension()));
    write_u32(out, static_cast<std::uint32_t>(set.subjects().size()));
    for (const auto& s : set.subjects()) {
        write_u32(out, static_cast<std::uint32_t>(s.id.size()));
        out.write(s.id.data(), static_cast<std::streamsize>(s.id.size()));
        write_u32(out, static_cast<std::uint32_t>(s.samples.size()));
        for (const auto& v : s.samples) {
            for (double x : v)
                write_f64(out, x);
        }
    }
}

FeatureSet generate_synthetic(const SyntheticSpec& spec)
{
    if (spec.n_subjects < 2)
        throw ConfigError("synthetic n_subjects must be at least 2");
    if (spec.samples_per_subject < 2)
        throw ConfigError("synthetic samples_per_subject must be at least 2");
    if (spec.dimension < 1)
        throw ConfigError("synthetic dimension must be positive");
    if (!(spec.within_class_noise >= 0.0) || !std::isfinite(spec.within_class_noise))
        throw ConfigError("synthetic within_class_noise must be a finite value >= 0");

    RandomStream rng(derive_seed(spec.seed, "synthetic-features"));
    const int width = std::max<int>(3, static_cast<int>(std::to_string(spec.n_subjects - 1).size()));
    std::vector<Subject> subjects;
    subjects.reserve(spec.n_subjects);
    for (std::size_t s = 0; s < spec.n_subjects; ++s) {
        FeatureVector mean(spec.dimension);
        for (auto& m : mean)
            m = rng.normal();
        std::ostringstream id;
        id << 's';
        id.width(width);
        id.fill('0');
        id << s;
        Subject subject{id.str(), {}};
        for (std::size_t i = 0; i < spec.samples_per_subject; ++i) {
            FeatureVector sample = mean;
            if (spec.within_class_noise > 0.0) {
                for (auto& x : sample)
                    x += spec.within_class_noise * rng.normal();
            }
            subject.samples.push_back(normalize(sample));
        }
        subjects.push_back(std::move(subject));
    }
    return FeatureSet(std::move(subjects), spec.dimension);
}

ProtocolSplit split_protocol(const FeatureSet& set)
{
    ProtocolSplit split;
    split.dimension = set.dimension();
    for (const auto& s : set.subjects()) {
        if (s.samples.size() < 2) {
            throw ProtocolError("subject " + s.id + " has " + std::to_string(s.samples.size()) +
                                " sample(s); at least 2 are required (1 enrol + 1 verify)");
        }
        split.subject_ids.push_back(s.id);
        split.enroll.push_back(s.samples.front());
        split.verify.emplace_back(s.samples.begin() + 1, s.samples.end());
    }
    if (split.subject_ids.empty())
        throw ProtocolError("feature set has no subjects");
    return split;
}

std::uint64_t digest(const FeatureSet& set)
{
    std::uint64_t h = fnv1a64("CBF1");
    auto feed = [&h](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    const auto dim = static_cast<std::uint64_t>(set.dimension());
    feed(&dim, sizeof dim);
    for (const auto& s : set.subjects()) {
        feed(s.id.data(), s.id.size());
        const auto n = static_cast<std::uint64_t>(s.samples.size());
        feed(&n, sizeof n);
        for (const auto& v : s.samples) {
            for (double x : v) {
                const auto bits = to_little(std::bit_cast<std::uint64_t>(x));
                feed(&bits, sizeof bits);
            }
        }
    }
    return h;
}

} // namespace cbattack
