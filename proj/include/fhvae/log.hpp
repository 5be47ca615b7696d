#pragma once

#include <string>

namespace fhvae::log {

enum class Level { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kSilent = 4 };

// Threshold comes from the FHVAE_LOG environment variable
// (debug|info|warn|error|silent); default is warn.
Level threshold();
void set_threshold(Level level);

void debug(const std::string& msg);
void info(const std::string& msg);
void warn(const std::string& msg);
void error(const std::string& msg);

}  // namespace fhvae::log
