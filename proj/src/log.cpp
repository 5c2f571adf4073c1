#include "vtol/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace vtol {

namespace {
std::atomic<long> g_count{0};
std::atomic<bool> g_stderr{true};
std::mutex g_mutex;
}  // namespace

void warn(std::string_view message) {
    ++g_count;
    if (g_stderr.load()) {
        std::lock_guard lock(g_mutex);
        std::cerr << "warning: " << message << '\n';
    }
}

void set_warnings_to_stderr(bool enabled) { g_stderr = enabled; }

long warning_count() { return g_count.load(); }

}  // namespace vtol
