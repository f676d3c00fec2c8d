#pragma once

#include <stdexcept>
#include <string>

namespace hsbt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Entropy source could not deliver random bytes.
class EntropyError : public Error {
 public:
  using Error::Error;
};

/// Decryption rejected the ciphertext: wrong key, wrong associated data or
/// a modified body/tag.
class AuthFailure : public Error {
 public:
  using Error::Error;
};

/// Search key outside [1, 2^32 - 2] or a malformed range.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed container, token or key file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// The enclave has no key for the requesting client.
class NoKey : public Error {
 public:
  using Error::Error;
};

/// Enclave memory budget would be exceeded.
class CapacityExceeded : public Error {
 public:
  using Error::Error;
};

/// The untrusted driver deviated from the query protocol.
class ProtocolViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace hsbt
