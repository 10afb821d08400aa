#include "endoshift/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "endoshift/error.hpp"

namespace endoshift {

namespace {

template <class E, std::size_t N>
struct Vocabulary {
    std::array<std::pair<E, std::string_view>, N> entries;

    std::string_view name(E v) const
    {
        for (const auto& [e, s] : entries)
            if (e == v)
                return s;
        return "?";
    }
    std::optional<E> parse(std::string_view s) const
    {
        for (const auto& [e, n] : entries)
            if (n == s)
                return e;
        return std::nullopt;
    }
};

constexpr Vocabulary<Label, 2> kLabels{{{{Label::Tumor, "tumor"}, {Label::NoTumor, "no_tumor"}}}};
constexpr Vocabulary<Timepoint, 5> kTimepoints{{{{Timepoint::Baseline, "baseline"},
                                                 {Timepoint::During, "during"},
                                                 {Timepoint::Restaging, "restaging"},
                                                 {Timepoint::Followup, "followup"},
                                                 {Timepoint::External, "external"}}}};
constexpr Vocabulary<Cohort, 5> kCohorts{{{{Cohort::IdTrain, "id_train"},
                                           {Cohort::IdVal, "id_val"},
                                           {Cohort::IdTest, "id_test"},
                                           {Cohort::FollowupLr, "followup_lr"},
                                           {Cohort::Ood, "ood"}}}};

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string_view> split_tabs(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto tab = line.find('\t', start);
        out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
        if (tab == std::string_view::npos)
            break;
        start = tab + 1;
    }
    return out;
}

[[noreturn]] void fail_at(std::size_t line, const std::string& what)
{
    throw ValidationError(what + " at line " + std::to_string(line));
}

// Bounded draw without modulo bias; independent of the standard library's
// distribution implementations.
std::size_t draw_below(std::mt19937_64& rng, std::size_t n)
{
    const std::uint64_t bound = n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    for (;;) {
        const std::uint64_t x = rng();
        if (x < limit)
            return static_cast<std::size_t>(x % bound);
    }
}

void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng)
{
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[draw_below(rng, i)]);
}

} // namespace

std::string_view to_string(Label v) { return kLabels.name(v); }
std::string_view to_string(Timepoint v) { return kTimepoints.name(v); }
std::string_view to_string(Cohort v) { return kCohorts.name(v); }
std::optional<Label> parse_label(std::string_view s) { return kLabels.parse(s); }
std::optional<Timepoint> parse_timepoint(std::string_view s) { return kTimepoints.parse(s); }
std::optional<Cohort> parse_cohort(std::string_view s) { return kCohorts.parse(s); }

std::filesystem::path DatasetManifest::resolve(const DatasetRecord& r) const
{
    const std::filesystem::path p(r.image_path);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

std::optional<std::size_t> DatasetManifest::find(std::string_view image_path) const
{
    for (std::size_t i = 0; i < records.size(); ++i)
        if (records[i].image_path == image_path)
            return i;
    return std::nullopt;
}

DatasetManifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir)
{
    DatasetManifest m;
    m.base_dir = base_dir;
    std::unordered_map<std::string, std::size_t> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (trim(line).empty())
            continue;
        if (line[0] == '#') {
            const std::string body = trim(std::string_view(line).substr(1));
            const auto colon = body.find(':');
            if (colon != std::string::npos)
                m.provenance[trim(std::string_view(body).substr(0, colon))] =
                    trim(std::string_view(body).substr(colon + 1));
            continue;
        }
        const auto fields = split_tabs(line);
        if (fields.size() >= 1 && fields[0] == "image_path")
            continue; // column header
        if (fields.size() != 5)
            fail_at(lineno, "expected 5 tab-separated fields, got " + std::to_string(fields.size()));

        DatasetRecord r;
        r.image_path = trim(fields[0]);
        if (r.image_path.empty())
            fail_at(lineno, "empty image_path");
        const auto label = parse_label(trim(fields[1]));
        if (!label)
            fail_at(lineno, "unknown label");
        const auto tp = parse_timepoint(trim(fields[2]));
        if (!tp)
            fail_at(lineno, "unknown timepoint");
        r.patient_id = trim(fields[3]);
        if (r.patient_id.empty())
            fail_at(lineno, "empty patient_id");
        const auto cohort = parse_cohort(trim(fields[4]));
        if (!cohort)
            fail_at(lineno, "unknown cohort");
        r.label = *label;
        r.timepoint = *tp;
        r.cohort = *cohort;

        const auto [it, fresh] = seen.emplace(r.image_path, lineno);
        if (!fresh)
            fail_at(lineno, "duplicate image_path '" + r.image_path + "' (first seen at line " +
                                std::to_string(it->second) + ")");
        m.records.push_back(std::move(r));
    }

    if (auto it = m.provenance.find("color_shift"); it != m.provenance.end() && it->second == "true")
        for (auto& r : m.records)
            r.color_shift = true;

    for (Cohort c : kAllCohorts) {
        const auto it = m.provenance.find("split." + std::string(to_string(c)));
        if (it == m.provenance.end())
            continue;
        std::size_t declared = 0;
        try {
            declared = std::stoul(it->second);
        } catch (const std::exception&) {
            throw ValidationError("invalid split declaration for " + std::string(to_string(c)) + ": '" + it->second +
                                  "'");
        }
        const auto actual = static_cast<std::size_t>(
            std::count_if(m.records.begin(), m.records.end(), [c](const DatasetRecord& r) { return r.cohort == c; }));
        if (actual != declared)
            throw ValidationError("cohort " + std::string(to_string(c)) + " has " + std::to_string(actual) +
                                  " records but the split declaration says " + std::to_string(declared));
    }

    if (m.records.empty())
        m.warnings.push_back("manifest is empty");
    return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError("cannot open manifest " + path.string());
    return parse_manifest(in, path.parent_path());
}

void write_manifest(std::ostream& os, const DatasetManifest& manifest)
{
    for (const auto& [k, v] : manifest.provenance)
        os << "# " << k << ": " << v << '\n';
    for (const auto& r : manifest.records)
        os << r.image_path << '\t' << to_string(r.label) << '\t' << to_string(r.timepoint) << '\t' << r.patient_id
           << '\t' << to_string(r.cohort) << '\n';
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path.string());
    write_manifest(out, manifest);
}

SplitSummary split_summary(const DatasetManifest& manifest)
{
    SplitSummary s;
    std::map<Cohort, std::set<std::string>> patients;
    std::set<std::string> all_patients;
    for (const auto& r : manifest.records) {
        auto& c = s.cohorts[r.cohort];
        ++c.total;
        ++s.overall.total;
        if (r.label == Label::Tumor) {
            ++c.tumor;
            ++s.overall.tumor;
        } else {
            ++c.no_tumor;
            ++s.overall.no_tumor;
        }
        patients[r.cohort].insert(r.patient_id);
        all_patients.insert(r.patient_id);
    }
    for (auto& [cohort, counts] : s.cohorts)
        counts.patients = patients[cohort].size();
    s.overall.patients = all_patients.size();

    std::set<std::string> leaked;
    for (const auto& p : patients[Cohort::IdTrain])
        for (Cohort held_out : {Cohort::IdTest, Cohort::FollowupLr, Cohort::Ood})
            if (patients[held_out].count(p)) {
                leaked.insert(p);
                s.warnings.push_back("patient '" + p + "' appears in id_train and " +
                                     std::string(to_string(held_out)));
            }
    s.leaked_patients.assign(leaked.begin(), leaked.end());
    return s;
}

void write_split_summary(std::ostream& os, const SplitSummary& s)
{
    auto row = [&os](std::string_view name, const CohortCounts& c) {
        char line[160];
        std::snprintf(line, sizeof line, "%-12s %8zu %8zu %8zu %9zu\n", std::string(name).c_str(), c.total, c.tumor,
                      c.no_tumor, c.patients);
        os << line;
    };
    char header[160];
    std::snprintf(header, sizeof header, "%-12s %8s %8s %8s %9s\n", "cohort", "images", "tumor", "no_tumor",
                  "patients");
    os << header;
    for (const auto& [cohort, counts] : s.cohorts)
        row(to_string(cohort), counts);
    row("total", s.overall);
    for (const auto& w : s.warnings)
        os << "warning: " << w << '\n';
}

RgbImage resize_bilinear(const RgbImage& img, std::size_t width, std::size_t height)
{
    if (img.empty() || width == 0 || height == 0)
        throw ValidationError("resize_bilinear: empty geometry");
    RgbImage out(width, height);
    const double sx = static_cast<double>(img.width()) / static_cast<double>(width);
    const double sy = static_cast<double>(img.height()) / static_cast<double>(height);
    const auto max_x = static_cast<double>(img.width() - 1);
    const auto max_y = static_cast<double>(img.height() - 1);
    for (std::size_t y = 0; y < height; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, max_y);
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, img.height() - 1);
        const double ty = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < width; ++x) {
            const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, max_x);
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, img.width() - 1);
            const double tx = fx - static_cast<double>(x0);
            const auto p00 = img.at(x0, y0), p10 = img.at(x1, y0), p01 = img.at(x0, y1), p11 = img.at(x1, y1);
            std::array<double, 3> v{};
            for (int c = 0; c < 3; ++c)
                v[c] = (p00[c] * (1 - tx) + p10[c] * tx) * (1 - ty) + (p01[c] * (1 - tx) + p11[c] * tx) * ty;
            out.set(x, y, v);
        }
    }
    return out;
}

Tensor3 preprocess(const RgbImage& img, const PreprocessedTensorSpec& spec)
{
    const RgbImage resized = resize_bilinear(img, spec.side, spec.side);
    Tensor3 t{3, spec.side, spec.side, std::vector<float>(3 * spec.side * spec.side)};
    for (std::size_t y = 0; y < spec.side; ++y)
        for (std::size_t x = 0; x < spec.side; ++x) {
            const auto px = resized.at(x, y);
            for (std::size_t c = 0; c < 3; ++c)
                t.data[(c * spec.side + y) * spec.side + x] = static_cast<float>((px[c] - spec.mean[c]) / spec.std[c]);
        }
    return t;
}

RgbImage denormalize(const Tensor3& t, const PreprocessedTensorSpec& spec)
{
    RgbImage out(t.width, t.height);
    for (std::size_t y = 0; y < t.height; ++y)
        for (std::size_t x = 0; x < t.width; ++x) {
            std::array<double, 3> v{};
            for (std::size_t c = 0; c < 3; ++c)
                v[c] = static_cast<double>(t.at(c, y, x)) * spec.std[c] + spec.mean[c];
            out.set(x, y, v);
        }
    return out;
}

void write_npy(const std::filesystem::path& path, const Tensor3& t)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + std::to_string(t.channels) + ", " +
                         std::to_string(t.height) + ", " + std::to_string(t.width) + "), }";
    // magic(6) + version(2) + header length(2) + header, padded to 64 bytes
    const std::size_t unpadded = 10 + header.size() + 1;
    header.append((64 - unpadded % 64) % 64, ' ');
    header.push_back('\n');

    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path.string());
    out.write("\x93NUMPY\x01\x00", 8);
    const auto len = static_cast<std::uint16_t>(header.size());
    const char len_bytes[2] = {static_cast<char>(len & 0xFF), static_cast<char>(len >> 8)};
    out.write(len_bytes, 2);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (float v : t.data) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        const char b[4] = {static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                           static_cast<char>((bits >> 16) & 0xFF), static_cast<char>(bits >> 24)};
        out.write(b, 4);
    }
}

BatchPlan balanced_batch_plan(const DatasetManifest& manifest, std::size_t batch, std::uint64_t seed)
{
    if (batch < 2 || batch % 2 != 0)
        throw ValidationError("balanced_batch_plan: batch must be even and >= 2");
    std::vector<std::size_t> tumor, no_tumor;
    for (std::size_t i = 0; i < manifest.records.size(); ++i)
        (manifest.records[i].label == Label::Tumor ? tumor : no_tumor).push_back(i);
    if (tumor.empty() || no_tumor.empty())
        throw ValidationError("cannot balance");

    std::mt19937_64 rng(seed);
    const std::size_t half = batch / 2;
    auto& majority = tumor.size() >= no_tumor.size() ? tumor : no_tumor;
    auto& minority = tumor.size() >= no_tumor.size() ? no_tumor : tumor;
    const std::size_t n_batches = (majority.size() + half - 1) / half;
    const std::size_t slots = n_batches * half;

    std::vector<std::size_t> major_seq = majority;
    shuffle(major_seq, rng);
    while (major_seq.size() < slots)
        major_seq.push_back(majority[draw_below(rng, majority.size())]);

    std::vector<std::size_t> minor_seq;
    minor_seq.reserve(slots + minority.size());
    while (minor_seq.size() < slots) {
        std::vector<std::size_t> pass = minority;
        shuffle(pass, rng);
        minor_seq.insert(minor_seq.end(), pass.begin(), pass.end());
    }
    minor_seq.resize(slots);

    BatchPlan plan(n_batches);
    for (std::size_t b = 0; b < n_batches; ++b) {
        auto& out = plan[b];
        out.insert(out.end(), major_seq.begin() + static_cast<std::ptrdiff_t>(b * half),
                   major_seq.begin() + static_cast<std::ptrdiff_t>((b + 1) * half));
        out.insert(out.end(), minor_seq.begin() + static_cast<std::ptrdiff_t>(b * half),
                   minor_seq.begin() + static_cast<std::ptrdiff_t>((b + 1) * half));
        shuffle(out, rng);
    }
    return plan;
}

} // namespace endoshift
