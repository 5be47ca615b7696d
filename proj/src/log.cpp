#include "fhvae/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>

namespace fhvae::log {

namespace {

Level parse_env() {
  const char* env = std::getenv("FHVAE_LOG");
  if (!env) return Level::kWarn;
  std::string v(env);
  if (v == "debug") return Level::kDebug;
  if (v == "info") return Level::kInfo;
  if (v == "warn") return Level::kWarn;
  if (v == "error") return Level::kError;
  if (v == "silent") return Level::kSilent;
  return Level::kWarn;
}

std::atomic<Level> g_threshold{parse_env()};
std::mutex g_mutex;

void emit(Level level, const char* tag, const std::string& msg) {
  if (level < g_threshold.load(std::memory_order_relaxed)) return;
  std::lock_guard<std::mutex> lock(g_mutex);
  std::cerr << tag << msg << "\n";
}

}  // namespace

Level threshold() { return g_threshold.load(std::memory_order_relaxed); }
void set_threshold(Level level) { g_threshold.store(level, std::memory_order_relaxed); }

void debug(const std::string& msg) { emit(Level::kDebug, "[debug] ", msg); }
void info(const std::string& msg) { emit(Level::kInfo, "[info] ", msg); }
void warn(const std::string& msg) { emit(Level::kWarn, "[warn] ", msg); }
void error(const std::string& msg) { emit(Level::kError, "[error] ", msg); }

}  // namespace fhvae::log
