#include "stainlab/run_record.hpp"

#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "stainlab/error.hpp"

namespace stainlab {

using nlohmann::json;

std::string iso8601(std::chrono::system_clock::time_point t) {
    const std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

json RunRecord::to_json() const {
    auto ms = [](std::chrono::system_clock::time_point t) {
        return std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
    };
    return {{"command", command},
            {"argv", argv},
            {"config", config},
            {"seed", seed},
            {"code_version", code_version},
            {"start", iso8601(start)},
            {"end", iso8601(end)},
            {"start_ms", ms(start)},
            {"end_ms", ms(end)},
            {"outputs", outputs}};
}

RunRecord RunRecord::from_json(const json& j) {
    RunRecord r;
    r.command = j.at("command").get<std::string>();
    r.argv = j.at("argv").get<std::vector<std::string>>();
    r.config = j.at("config");
    r.seed = j.at("seed").get<std::uint64_t>();
    r.code_version = j.at("code_version").get<std::string>();
    r.start = std::chrono::system_clock::time_point(std::chrono::milliseconds(j.at("start_ms").get<std::int64_t>()));
    r.end = std::chrono::system_clock::time_point(std::chrono::milliseconds(j.at("end_ms").get<std::int64_t>()));
    r.outputs = j.at("outputs").get<std::vector<std::string>>();
    return r;
}

void RunRecord::write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write run record " + path.string());
    out << to_json().dump(2) << '\n';
}

RunRecord RunRecord::read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open run record " + path.string());
    return from_json(json::parse(in));
}

}  // namespace stainlab
