#include "stainlab/patch_pipeline.hpp"

#include <spdlog/spdlog.h>

#include <deque>
#include <fstream>
#include <set>
#include <json.hpp>

#include "stainlab/error.hpp"
#include "stainlab/pearson.hpp"
#include "stainlab/png_io.hpp"
#include "stainlab/random.hpp"

namespace stainlab::patch {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string to_string(Split s) { return s == Split::train ? "train" : "val"; }

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    throw ConfigError("unknown split '" + s + "' (expected train|val)");
}

void ExtractionConfig::validate() const {
    if (patch_size < 1) throw ConfigError("patch_size must be positive");
    if (stride < 1 || stride > patch_size) throw ConfigError("stride must satisfy 1 <= stride <= patch_size");
    if (!(tissue_threshold >= 0.0 && tissue_threshold <= 1.0))
        throw ConfigError("tissue_threshold must lie in [0,1]");
}

namespace {

void require_fits(int width, int height, const ExtractionConfig& cfg) {
    if (width < cfg.patch_size || height < cfg.patch_size)
        throw DataError("slide too small: " + std::to_string(width) + "x" + std::to_string(height) +
                        " is smaller than patch size " + std::to_string(cfg.patch_size));
}

int positions(int extent, const ExtractionConfig& cfg) { return (extent - cfg.patch_size) / cfg.stride + 1; }

}  // namespace

std::uint64_t window_count(int image_width, int image_height, const ExtractionConfig& cfg) {
    cfg.validate();
    require_fits(image_width, image_height, cfg);
    return std::uint64_t(positions(image_width, cfg)) * std::uint64_t(positions(image_height, cfg));
}

std::vector<Window> enumerate_windows(int image_width, int image_height, const ExtractionConfig& cfg) {
    const auto count = window_count(image_width, image_height, cfg);
    std::vector<Window> out;
    out.reserve(count);
    const int nx = positions(image_width, cfg);
    const int ny = positions(image_height, cfg);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) out.push_back({i * cfg.stride, j * cfg.stride});
    return out;
}

double tissue_fraction(const Image& patch, double whiteness) {
    const std::size_t n = std::size_t(patch.width()) * std::size_t(patch.height());
    if (n == 0) return 0.0;
    auto px = patch.pixels();
    std::size_t tissue = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool background = px[3 * i] > whiteness && px[3 * i + 1] > whiteness && px[3 * i + 2] > whiteness;
        if (!background) ++tissue;
    }
    return double(tissue) / double(n);
}

double alignment_cc(const PatchPair& pair) {
    auto gray = [](const Image& img) {
        std::vector<double> g(std::size_t(img.width()) * std::size_t(img.height()));
        auto px = img.pixels();
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] = 0.299 * px[3 * i] + 0.587 * px[3 * i + 1] + 0.114 * px[3 * i + 2];
        return g;
    };
    const auto a = gray(pair.nonstained);
    const auto b = gray(pair.stained);
    return losses::pearson_cc(std::span<const double>(a), std::span<const double>(b)).value;
}

void validate_record(const SlidePairRecord& record) {
    png::Dimensions a, b;
    try {
        a = png::probe(record.nonstained_path);
        b = png::probe(record.stained_path);
    } catch (const IoError& e) {
        throw IoError("slide '" + record.slide_id + "': " + e.what());
    } catch (const DataError& e) {
        throw DataError("slide '" + record.slide_id + "': " + e.what());
    }
    if (a.width != b.width || a.height != b.height)
        throw DataError("unregistered pair '" + record.slide_id + "': nonstained " + std::to_string(a.width) +
                        "x" + std::to_string(a.height) + " vs stained " + std::to_string(b.width) + "x" +
                        std::to_string(b.height));
}

namespace {

// Rolling band of consecutive raster rows kept as raw bytes.
class RowBand {
public:
    RowBand(png::RowReader& reader) : reader_(reader) {}

    void fill_to(int y_end) {
        while (first_ + int(rows_.size()) < y_end) {
            std::vector<std::uint8_t> row(std::size_t(reader_.width()) * 3);
            reader_.read_row(std::span<std::uint8_t>(row));
            rows_.push_back(std::move(row));
        }
    }

    void drop_before(int y) {
        while (first_ < y && !rows_.empty()) {
            rows_.pop_front();
            ++first_;
        }
    }

    Image cut(int x0, int y0, int size) const {
        Image out(size, size);
        for (int y = 0; y < size; ++y) {
            const auto& src = rows_[std::size_t(y0 + y - first_)];
            auto dst = out.row(y);
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = from_u8(src[std::size_t(x0) * 3 + i]);
        }
        return out;
    }

    std::size_t resident_rows() const { return rows_.size(); }

private:
    png::RowReader& reader_;
    std::deque<std::vector<std::uint8_t>> rows_;
    int first_ = 0;
};

}  // namespace

std::size_t extract_pairs(const SlidePairRecord& record, const ExtractionConfig& cfg,
                          const std::function<void(PatchPair&&)>& sink) {
    cfg.validate();
    validate_record(record);

    std::optional<png::RowReader> ns_reader, st_reader;
    try {
        ns_reader.emplace(record.nonstained_path);
        st_reader.emplace(record.stained_path);
    } catch (const IoError& e) {
        throw IoError("slide '" + record.slide_id + "': " + e.what());
    }
    const int width = ns_reader->width();
    const int height = ns_reader->height();
    require_fits(width, height, cfg);

    RowBand ns_band(*ns_reader), st_band(*st_reader);
    const int nx = positions(width, cfg);
    const int ny = positions(height, cfg);
    std::size_t emitted = 0;
    for (int j = 0; j < ny; ++j) {
        const int y0 = j * cfg.stride;
        ns_band.drop_before(y0);
        st_band.drop_before(y0);
        try {
            ns_band.fill_to(y0 + cfg.patch_size);
            st_band.fill_to(y0 + cfg.patch_size);
        } catch (const IoError& e) {
            throw IoError("slide '" + record.slide_id + "': " + e.what());
        }
        for (int i = 0; i < nx; ++i) {
            const int x0 = i * cfg.stride;
            Image stained = st_band.cut(x0, y0, cfg.patch_size);
            if (tissue_fraction(stained) < cfg.tissue_threshold) continue;
            PatchPair pair{record.slide_id, x0, y0, cfg.patch_size, ns_band.cut(x0, y0, cfg.patch_size),
                           std::move(stained)};
            sink(std::move(pair));
            ++emitted;
        }
    }
    return emitted;
}

std::vector<SlidePairRecord> split_manifest(std::vector<SlidePairRecord> records, std::size_t train_count,
                                            std::uint64_t seed) {
    if (train_count >= records.size())
        throw ConfigError("train_count (" + std::to_string(train_count) + ") must be smaller than the number of slides (" +
                          std::to_string(records.size()) + ")");
    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng::Engine engine(rng::derive(seed, 0x5317));
    rng::shuffle(std::span<std::size_t>(order), engine);
    for (std::size_t k = 0; k < order.size(); ++k) records[order[k]].split = k < train_count ? Split::train : Split::val;
    return records;
}

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::vector<json> read_json_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace

std::vector<SlidePairRecord> read_manifest(const fs::path& path) {
    const fs::path base = path.parent_path();
    std::vector<SlidePairRecord> records;
    std::set<std::string> seen;
    for (const auto& j : read_json_lines(path)) {
        try {
            SlidePairRecord r;
            r.slide_id = j.at("slide_id").get<std::string>();
            r.nonstained_path = resolve(base, j.at("nonstained_path").get<std::string>());
            r.stained_path = resolve(base, j.at("stained_path").get<std::string>());
            r.split = parse_split(j.value("split", std::string("train")));
            if (!seen.insert(r.slide_id).second) throw ConfigError("duplicate slide_id '" + r.slide_id + "'");
            records.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw ConfigError(path.string() + ": malformed manifest record: " + e.what());
        }
    }
    return records;
}

void write_manifest(const fs::path& path, const std::vector<SlidePairRecord>& records) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& r : records) {
        json j = {{"slide_id", r.slide_id},
                  {"nonstained_path", r.nonstained_path.string()},
                  {"stained_path", r.stained_path.string()},
                  {"split", to_string(r.split)}};
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<IndexEntry> read_index(const fs::path& path) {
    std::vector<IndexEntry> entries;
    for (const auto& j : read_json_lines(path)) {
        try {
            entries.push_back({j.at("slide_id").get<std::string>(), j.at("x0").get<int>(), j.at("y0").get<int>(),
                               j.at("nonstained_png").get<std::string>(), j.at("stained_png").get<std::string>()});
        } catch (const json::exception& e) {
            throw ConfigError(path.string() + ": malformed index entry: " + e.what());
        }
    }
    return entries;
}

PatchDataset PatchDataset::open(const fs::path& dir) {
    PatchDataset ds;
    ds.root = dir;
    ds.entries = read_index(dir / "index.jsonl");
    if (fs::exists(dir / "manifest.jsonl")) ds.manifest = read_manifest(dir / "manifest.jsonl");
    return ds;
}

std::optional<Split> PatchDataset::split_of(const std::string& slide_id) const {
    for (const auto& r : manifest)
        if (r.slide_id == slide_id) return r.split;
    return std::nullopt;
}

std::vector<IndexEntry> PatchDataset::entries_in(Split s) const {
    std::vector<IndexEntry> out;
    for (const auto& e : entries)
        if (split_of(e.slide_id) == s) out.push_back(e);
    return out;
}

PatchPair PatchDataset::load(const IndexEntry& entry) const {
    PatchPair p;
    p.slide_id = entry.slide_id;
    p.x0 = entry.x0;
    p.y0 = entry.y0;
    p.nonstained = png::read(root / entry.nonstained_png);
    p.stained = png::read(root / entry.stained_png);
    if (p.nonstained.width() != p.stained.width() || p.nonstained.height() != p.stained.height())
        throw DataError("patch pair " + entry.slide_id + "@" + std::to_string(entry.x0) + "," +
                        std::to_string(entry.y0) + " has mismatched sizes");
    p.size = p.nonstained.width();
    return p;
}

ExtractionSummary write_patch_dataset(const std::vector<SlidePairRecord>& records, const ExtractionConfig& cfg,
                                      const fs::path& out_dir) {
    cfg.validate();
    fs::create_directories(out_dir / "patches");
    std::vector<SlidePairRecord> absolute = records;
    for (auto& r : absolute) {
        r.nonstained_path = fs::absolute(r.nonstained_path);
        r.stained_path = fs::absolute(r.stained_path);
    }
    write_manifest(out_dir / "manifest.jsonl", absolute);

    std::ofstream index(out_dir / "index.jsonl");
    if (!index) throw IoError("cannot write " + (out_dir / "index.jsonl").string());

    ExtractionSummary summary;
    for (const auto& record : absolute) {
        const fs::path rel_dir = fs::path("patches") / record.slide_id;
        fs::create_directories(out_dir / rel_dir);
        const auto n = extract_pairs(record, cfg, [&](PatchPair&& pair) {
            const std::string stem = std::to_string(pair.x0) + "_" + std::to_string(pair.y0);
            const fs::path ns = rel_dir / (stem + "_nonstained.png");
            const fs::path st = rel_dir / (stem + "_stained.png");
            png::write(out_dir / ns, pair.nonstained);
            png::write(out_dir / st, pair.stained);
            if (alignment_cc(pair) < 0.0) {
                ++summary.alignment_warnings;
                spdlog::warn("slide {} window ({}, {}): negative grayscale correlation between nonstained and "
                             "stained patch; check registration",
                             pair.slide_id, pair.x0, pair.y0);
            }
            json j = {{"slide_id", pair.slide_id},
                      {"x0", pair.x0},
                      {"y0", pair.y0},
                      {"nonstained_png", ns.string()},
                      {"stained_png", st.string()}};
            index << j.dump() << '\n';
        });
        summary.pairs += n;
        summary.per_slide.emplace_back(record.slide_id, n);
        spdlog::info("slide {}: {} patch pairs", record.slide_id, n);
    }
    if (!index) throw IoError("index write failed in " + out_dir.string());
    return summary;
}

}  // namespace stainlab::patch
