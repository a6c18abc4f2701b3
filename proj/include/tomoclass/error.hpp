#pragma once

#include <stdexcept>
#include <string>

namespace tomoclass {

//! Base of every error raised by the library.
class Error : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

//! Input violates a file format (bad magic, bad token, bad code).
class FormatError : public Error
{
  public:
    using Error::Error;
};

//! Payload length disagrees with the header dimensions.
class TruncationError : public FormatError
{
  public:
    using FormatError::FormatError;
};

//! Header carried an impossible value (non-positive step, empty axis...).
class HeaderError : public FormatError
{
  public:
    using FormatError::FormatError;
};

class ShapeError : public Error
{
  public:
    using Error::Error;
};

//! A value lies outside its admissible domain (label > 8, single class GBM).
class DomainError : public Error
{
  public:
    using Error::Error;
};

class ParameterError : public Error
{
  public:
    using Error::Error;
};

class DataError : public Error
{
  public:
    using Error::Error;
};

class SchemaError : public Error
{
  public:
    using Error::Error;
};

class ChannelError : public Error
{
  public:
    using Error::Error;
};

class ConfigError : public Error
{
  public:
    using Error::Error;
};

//! Square placement could not reach the target test fraction.
class SaturationError : public Error
{
  public:
    SaturationError(std::string const& what, double achieved)
        : Error(what), achieved_(achieved)
    {
    }
    double achieved_fraction() const noexcept { return achieved_; }

  private:
    double achieved_;
};

//! Cholesky factorisation failed even after jitter escalation.
class ConditioningError : public Error
{
  public:
    using Error::Error;
};

//! A sample statistic is undefined for the given data.
class StatisticError : public Error
{
  public:
    using Error::Error;
};

class BandwidthError : public StatisticError
{
  public:
    using StatisticError::StatisticError;
};

class EmptyEvaluationError : public Error
{
  public:
    using Error::Error;
};

class IoError : public Error
{
  public:
    using Error::Error;
};

}  // namespace tomoclass
