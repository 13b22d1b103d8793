#include "genfacet/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace genfacet::log {

namespace {
Level from_env() {
    const char* v = std::getenv("GENFACET_LOG");
    if (!v) return Level::warn;
    std::string s(v);
    if (s == "debug") return Level::debug;
    if (s == "info") return Level::info;
    if (s == "error") return Level::error;
    if (s == "off") return Level::off;
    return Level::warn;
}

std::atomic<int>& level_slot() {
    static std::atomic<int> level{static_cast<int>(from_env())};
    return level;
}

const char* tag(Level l) {
    switch (l) {
        case Level::debug: return "debug";
        case Level::info: return "info";
        case Level::warn: return "warn";
        case Level::error: return "error";
        default: return "";
    }
}
}  // namespace

Level threshold() { return static_cast<Level>(level_slot().load()); }

void set_threshold(Level level) { level_slot().store(static_cast<int>(level)); }

void write(Level level, std::string_view message) {
    if (static_cast<int>(level) < level_slot().load()) return;
    static std::mutex mu;
    std::lock_guard lock(mu);
    std::clog << "[genfacet " << tag(level) << "] " << message << '\n';
}

}  // namespace genfacet::log
