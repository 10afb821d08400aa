#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "endoshift/error.hpp"
#include "endoshift/image_io.hpp"
#include "endoshift/metrics.hpp"

namespace endoshift {

namespace {

// 5x7 glyphs, one byte per row, bit 4 is the leftmost column.
struct Glyph {
    char c;
    std::array<std::uint8_t, 7> rows;
};

constexpr Glyph kFont[] = {
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'A', {0x0E, 0x11, 0x11, 0x11, 0x1F, 0x11, 0x11}}, {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
    {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}}, {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
    {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}}, {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}}, {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}}, {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
    {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}}, {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}}, {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}}, {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}}, {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
    {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}}, {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
    {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}}, {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
    {'/', {0x00, 0x01, 0x02, 0x04, 0x08, 0x10, 0x00}}, {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
    {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}}, {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
    {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}}, {'?', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x00, 0x04}},
};

const Glyph* glyph(char c)
{
    if (c >= 'a' && c <= 'z')
        c = static_cast<char>(c - 'a' + 'A');
    for (const auto& g : kFont)
        if (g.c == c)
            return &g;
    return c == ' ' ? nullptr : &kFont[std::size(kFont) - 1];
}

using Color = std::array<double, 3>;

constexpr int kScale = 2;
constexpr int kAdvance = 6 * kScale;

int text_width(std::string_view s) { return static_cast<int>(s.size()) * kAdvance - kScale; }

void fill_rect(RgbImage& img, int x0, int y0, int w, int h, const Color& c)
{
    for (int y = std::max(0, y0); y < std::min<int>(static_cast<int>(img.height()), y0 + h); ++y)
        for (int x = std::max(0, x0); x < std::min<int>(static_cast<int>(img.width()), x0 + w); ++x)
            img.set(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c);
}

void draw_text(RgbImage& img, int x, int y, std::string_view s, const Color& c)
{
    for (char ch : s) {
        if (const Glyph* g = glyph(ch))
            for (int row = 0; row < 7; ++row)
                for (int col = 0; col < 5; ++col)
                    if (g->rows[row] & (0x10 >> col))
                        fill_rect(img, x + col * kScale, y + row * kScale, kScale, kScale, c);
        x += kAdvance;
    }
}

void draw_centered(RgbImage& img, int cx, int y, std::string_view s, const Color& c)
{
    draw_text(img, cx - text_width(s) / 2, y, s, c);
}

RgbImage render_confusion(const std::string& title, const ConfusionMatrix& cm, std::size_t runs)
{
    constexpr int cell_w = 150, cell_h = 100, left = 150, top = 60;
    constexpr int width = left + 2 * cell_w + 30, height = top + 2 * cell_h + 90;
    RgbImage img = RgbImage::filled(width, height, 1.0, 1.0, 1.0);
    const Color ink{0.0, 0.0, 0.0};
    draw_centered(img, width / 2, 16, title, ink);

    // rows: true no_tumor, true tumor; columns: predicted no_tumor, predicted tumor
    const std::array<std::array<std::pair<const char*, std::size_t>, 2>, 2> cells{
        {{{{"TN", cm.tn}, {"FP", cm.fp}}}, {{{"FN", cm.fn}, {"TP", cm.tp}}}}};
    const std::array<std::size_t, 2> row_total{cm.tn + cm.fp, cm.fn + cm.tp};
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
            const auto& [name, count] = cells[r][c];
            const double frac = row_total[r] ? static_cast<double>(count) / static_cast<double>(row_total[r]) : 0.0;
            const Color fill{1.0 - 0.85 * frac, 1.0 - 0.6 * frac, 1.0 - 0.2 * frac};
            const Color text = frac > 0.55 ? Color{1.0, 1.0, 1.0} : ink;
            const int x0 = left + c * cell_w, y0 = top + r * cell_h;
            fill_rect(img, x0, y0, cell_w, cell_h, fill);
            draw_centered(img, x0 + cell_w / 2, y0 + cell_h / 2 - 20, name, text);
            draw_centered(img, x0 + cell_w / 2, y0 + cell_h / 2 + 6, std::to_string(count), text);
        }
    for (int k = 0; k <= 2; ++k) {
        fill_rect(img, left, top + k * cell_h - 1, 2 * cell_w, 2, ink);
        fill_rect(img, left + k * cell_w - 1, top, 2, 2 * cell_h, ink);
    }
    const char* names[2] = {"NO TUMOR", "TUMOR"};
    for (int k = 0; k < 2; ++k) {
        draw_text(img, left - 12 - text_width(names[k]), top + k * cell_h + cell_h / 2 - 7, names[k], ink);
        draw_centered(img, left + k * cell_w + cell_w / 2, top + 2 * cell_h + 10, names[k], ink);
    }
    draw_centered(img, left + cell_w, top + 2 * cell_h + 36, "PREDICTED", ink);
    draw_text(img, 10, top - 24, "TRUE", ink);
    draw_text(img, 10, height - 22, "RUNS " + std::to_string(runs) + "  N " + std::to_string(cm.total()), ink);
    return img;
}

std::string sanitize(std::string_view s)
{
    std::string out;
    for (char c : s)
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_');
    return out;
}

// Pads to a display width; "±" is two bytes but one column.
std::string pad(const std::string& s, std::size_t width)
{
    std::size_t cols = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80)
            ++cols;
    return s + std::string(width > cols ? width - cols : 0, ' ');
}

void write_file(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path.string());
    out << text;
}

} // namespace

std::string render_table(const MetricsReport& report, Cohort cohort)
{
    std::vector<std::string> models;
    std::array<bool, 2> has_condition{false, false};
    for (const auto& row : report.rows) {
        if (row.cohort != cohort)
            continue;
        if (std::find(models.begin(), models.end(), row.model_id) == models.end())
            models.push_back(row.model_id);
        has_condition[row.condition == Condition::NoShift ? 0 : 1] = true;
    }

    std::ostringstream os;
    if (auto it = report.provenance.find("provenance"); it != report.provenance.end())
        os << "# " << it->second << '\n';
    char line[256];
    std::snprintf(line, sizeof line, "# cohort: %s  threshold: %.2f  mean ± population std over runs\n",
                  std::string(to_string(cohort)).c_str(), report.threshold);
    os << line;
    for (const auto& n : report.notices)
        os << "# notice: " << n << '\n';

    const std::array<std::pair<Condition, const char*>, 2> groups{
        {{Condition::NoShift, "No Color Shift"}, {Condition::ColorShift, "Color Shift"}}};
    for (int g = 0; g < 2; ++g)
        if (!has_condition[g])
            os << "# notice: no " << to_string(groups[g].first) << " results for this cohort; column group omitted\n";

    std::size_t model_w = 5;
    for (const auto& m : models)
        model_w = std::max(model_w, m.size());
    model_w += 2;
    constexpr std::size_t cell_w = 14;

    std::string head1 = pad("", model_w), head2 = pad("Model", model_w);
    for (int g = 0; g < 2; ++g) {
        if (!has_condition[g])
            continue;
        head1 += "| " + pad(groups[g].second, 3 * cell_w);
        head2 += "| " + pad("Acc", cell_w) + pad("Sens", cell_w) + pad("Spec", cell_w);
    }
    auto rstrip = [](std::string s) {
        s.erase(s.find_last_not_of(' ') + 1);
        return s;
    };
    os << rstrip(head1) << '\n' << rstrip(head2) << '\n';

    std::vector<std::string> footnotes;
    for (const auto& model : models) {
        std::string out = pad(model, model_w);
        for (int g = 0; g < 2; ++g) {
            if (!has_condition[g])
                continue;
            out += "| ";
            const auto row = std::find_if(report.rows.begin(), report.rows.end(), [&](const AggregateRow& r) {
                return r.cohort == cohort && r.model_id == model && r.condition == groups[g].first;
            });
            if (row == report.rows.end()) {
                out += pad("missing", cell_w) + pad("missing", cell_w) + pad("missing", cell_w);
                continue;
            }
            const std::array<std::pair<const char*, const MetricSummary*>, 3> cells{
                {{"accuracy", &row->accuracy}, {"sensitivity", &row->sensitivity}, {"specificity", &row->specificity}}};
            for (const auto& [name, s] : cells) {
                std::string text = s->formatted();
                if (s->undefined) {
                    text += "*";
                    footnotes.push_back(model + " " + std::string(to_string(groups[g].first)) + " " + name + ": " +
                                        std::to_string(s->undefined) + " of " +
                                        std::to_string(s->undefined + s->runs) +
                                        " run(s) undefined, excluded from the mean");
                }
                out += pad(text, cell_w);
            }
        }
        os << rstrip(out) << '\n';
    }
    for (const auto& f : footnotes)
        os << "* " << f << '\n';
    return os.str();
}

std::vector<std::filesystem::path> render_report(const MetricsReport& report, const std::filesystem::path& out)
{
    if (report.rows.empty())
        throw ValidationError("render_report: empty report");
    std::filesystem::create_directories(out);
    std::vector<std::filesystem::path> written;

    written.push_back(out / "report.json");
    write_file(written.back(), report_to_json(report));

    for (Cohort cohort : kAllCohorts) {
        if (cohort == Cohort::IdTest)
            continue;
        if (std::none_of(report.rows.begin(), report.rows.end(),
                         [cohort](const AggregateRow& r) { return r.cohort == cohort; }))
            continue;
        written.push_back(out / ("table_" + std::string(to_string(cohort)) + ".txt"));
        write_file(written.back(), render_table(report, cohort));
    }

    for (const auto& row : report.rows) {
        if (row.cohort != Cohort::IdTest)
            continue;
        ConfusionMatrix sum;
        for (const auto& r : row.runs)
            sum += r.cm;
        const std::string cond = (row.condition == Condition::NoShift ? "NO COLOR SHIFT" : "COLOR SHIFT");
        std::map<std::string, std::string> text = report.provenance;
        text["cohort"] = std::string(to_string(row.cohort));
        text["model_id"] = row.model_id;
        text["condition"] = std::string(to_string(row.condition));
        written.push_back(out /
                          ("cm_" + sanitize(row.model_id) + "_" + std::string(to_string(row.condition)) + ".png"));
        write_png(written.back(), render_confusion(row.model_id + " - " + cond, sum, row.runs.size()), text);
    }
    return written;
}

} // namespace endoshift
