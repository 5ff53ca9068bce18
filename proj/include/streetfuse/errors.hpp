#pragma once

#include <stdexcept>
#include <string>

namespace streetfuse {

// Base class for all pipeline errors. Subclasses carry the failure category
// so the CLI can map them onto exit codes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

class MaskSizeMismatch : public Error {
 public:
  explicit MaskSizeMismatch(const std::string& what) : Error(what) {}
};

class EmptyCloud : public Error {
 public:
  explicit EmptyCloud(const std::string& what) : Error(what) {}
};

class TooFewPoints : public Error {
 public:
  explicit TooFewPoints(const std::string& what) : Error(what) {}
};

class DegenerateCorrespondences : public Error {
 public:
  explicit DegenerateCorrespondences(const std::string& what) : Error(what) {}
};

class NoValidFrames : public Error {
 public:
  explicit NoValidFrames(const std::string& what) : Error(what) {}
};

class OutOfBounds : public Error {
 public:
  explicit OutOfBounds(const std::string& what) : Error(what) {}
};

class NoSupervision : public Error {
 public:
  explicit NoSupervision(const std::string& what) : Error(what) {}
};

class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(const std::string& what, long step) : Error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_ = -1;
};

class InvalidSpec : public Error {
 public:
  explicit InvalidSpec(const std::string& what) : Error(what) {}
};

class EmptyGroundTruth : public Error {
 public:
  explicit EmptyGroundTruth(const std::string& what) : Error(what) {}
};

}  // namespace streetfuse
