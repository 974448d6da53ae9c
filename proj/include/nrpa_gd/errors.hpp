#pragma once

#include <stdexcept>
#include <string>

namespace nrpa_gd {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent configuration / data files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A caller violated an operation's precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// The environment could not advance the dialogue (backend down, etc).
class EnvironmentError : public Error {
 public:
  using Error::Error;
};

// Transport to the chat-completions endpoint failed after retries.
class TransportError : public EnvironmentError {
 public:
  using EnvironmentError::EnvironmentError;
};

// Prompt template could not be rendered.
class RenderError : public Error {
 public:
  using Error::Error;
};

}  // namespace nrpa_gd
