#pragma once

// Encrypted-at-rest image storage and the system decoy pool.
//
// Each owner gets its own AES-256-GCM key, derived with HKDF-SHA256 from the
// server master secret and the owner id. The associated data binds the image
// id, owner, content type and plaintext length, so a record cannot be moved
// to another id or owner without failing authentication.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/kdf.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

#include "clickotp/encoding.hpp"
#include "clickotp/error.hpp"
#include "clickotp/random.hpp"

namespace clickotp {

inline constexpr std::string_view kSystemOwner = "SYSTEM";
inline constexpr std::size_t kMaxImageBytes = 5u * 1024u * 1024u;
inline constexpr std::size_t kNonceBytes = 12;
inline constexpr std::size_t kTagBytes = 16;
inline constexpr std::size_t kKeyBytes = 32;

inline bool supported_content_type(std::string_view ct) {
  return ct == "image/png" || ct == "image/jpeg";
}

/// One sealed image. `ciphertext` carries the GCM tag in its last 16 bytes.
struct StoredImage {
  std::string image_id;
  std::string owner;
  Bytes ciphertext;
  Bytes nonce;
  std::string content_type;
  std::uint64_t plaintext_length = 0;
};

namespace detail {

struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

struct PkeyCtxDeleter {
  void operator()(EVP_PKEY_CTX* ctx) const { EVP_PKEY_CTX_free(ctx); }
};

inline void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_blob(Bytes& out, std::string_view s) {
  put_u64(out, s.size());
  out.insert(out.end(), s.begin(), s.end());
}

inline void put_blob(Bytes& out, const Bytes& b) {
  put_u64(out, b.size());
  out.insert(out.end(), b.begin(), b.end());
}

/// Little-endian reader over a record file; any overrun is an integrity error.
class Reader {
 public:
  explicit Reader(const Bytes& data) : data_(data) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{data_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }
  Bytes blob() {
    const std::uint64_t n = u64();
    need(n);
    Bytes out(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
              data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }
  std::string str() {
    const Bytes b = blob();
    return {b.begin(), b.end()};
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > data_.size() - pos_) fail(ErrorCode::Integrity, "truncated image record");
  }
  const Bytes& data_;
  std::size_t pos_ = 0;
};

inline constexpr std::string_view kRecordMagic = "CLICKOTP-IMG-1";

}  // namespace detail

/// Associated data authenticated alongside the ciphertext.
inline Bytes associated_data(const StoredImage& rec) {
  Bytes aad;
  detail::put_blob(aad, std::string_view("clickotp/aad/v1"));
  detail::put_blob(aad, rec.image_id);
  detail::put_blob(aad, rec.owner);
  detail::put_blob(aad, rec.content_type);
  detail::put_u64(aad, rec.plaintext_length);
  return aad;
}

inline Bytes serialize_record(const StoredImage& rec) {
  Bytes out;
  detail::put_blob(out, detail::kRecordMagic);
  detail::put_blob(out, rec.image_id);
  detail::put_blob(out, rec.owner);
  detail::put_blob(out, rec.content_type);
  detail::put_u64(out, rec.plaintext_length);
  detail::put_blob(out, rec.nonce);
  detail::put_blob(out, rec.ciphertext);
  return out;
}

inline StoredImage deserialize_record(const Bytes& data) {
  detail::Reader in(data);
  if (in.str() != detail::kRecordMagic) fail(ErrorCode::Integrity, "not an image record");
  StoredImage rec;
  rec.image_id = in.str();
  rec.owner = in.str();
  rec.content_type = in.str();
  rec.plaintext_length = in.u64();
  rec.nonce = in.blob();
  rec.ciphertext = in.blob();
  if (!in.done()) fail(ErrorCode::Integrity, "trailing bytes in image record");
  return rec;
}

/// Authenticated encryption of image blobs under per-owner derived keys.
class ImageCipher {
 public:
  explicit ImageCipher(Bytes master_secret) : master_(std::move(master_secret)) {}

  ImageCipher(const ImageCipher&) = delete;
  ImageCipher& operator=(const ImageCipher&) = delete;
  ImageCipher(ImageCipher&& other) noexcept : master_(std::move(other.master_)) {}

  ~ImageCipher() {
    if (!master_.empty()) OPENSSL_cleanse(master_.data(), master_.size());
  }

  bool configured() const noexcept { return !master_.empty(); }

  /// MASTER_KEY as hex (64+ chars) or base64; at least 16 bytes of key material.
  static Bytes parse_master_key(std::string_view text) {
    std::optional<Bytes> key = from_hex(text);
    if (!key) key = base64_decode(text);
    if (!key || key->size() < 16) {
      fail(ErrorCode::Config, "MASTER_KEY must be hex or base64 encoding at least 16 bytes");
    }
    return *key;
  }

  std::array<std::uint8_t, kKeyBytes> derive_key(std::string_view owner) const {
    require_master();
    std::unique_ptr<EVP_PKEY_CTX, detail::PkeyCtxDeleter> pctx(
        EVP_PKEY_CTX_new_id(EVP_PKEY_HKDF, nullptr));
    static constexpr std::string_view kSalt = "clickotp/image-vault/v1";
    const std::string info = "owner:" + std::string(owner);
    std::array<std::uint8_t, kKeyBytes> key{};
    std::size_t len = key.size();
    if (!pctx || EVP_PKEY_derive_init(pctx.get()) <= 0 ||
        EVP_PKEY_CTX_set_hkdf_md(pctx.get(), EVP_sha256()) <= 0 ||
        EVP_PKEY_CTX_set1_hkdf_salt(pctx.get(), reinterpret_cast<const unsigned char*>(kSalt.data()),
                                    static_cast<int>(kSalt.size())) <= 0 ||
        EVP_PKEY_CTX_set1_hkdf_key(pctx.get(), master_.data(), static_cast<int>(master_.size())) <= 0 ||
        EVP_PKEY_CTX_add1_hkdf_info(pctx.get(), reinterpret_cast<const unsigned char*>(info.data()),
                                    static_cast<int>(info.size())) <= 0 ||
        EVP_PKEY_derive(pctx.get(), key.data(), &len) <= 0 || len != key.size()) {
      fail(ErrorCode::Config, "HKDF derivation failed");
    }
    return key;
  }

  StoredImage seal(const Bytes& plaintext, std::string owner, std::string image_id,
                   std::string content_type) const {
    require_master();
    if (plaintext.empty()) fail(ErrorCode::Validation, "image is empty");
    if (plaintext.size() > kMaxImageBytes) fail(ErrorCode::Validation, "image exceeds 5 MiB");
    if (!supported_content_type(content_type)) {
      fail(ErrorCode::Validation, "unsupported content type: " + content_type);
    }

    StoredImage rec;
    rec.image_id = std::move(image_id);
    rec.owner = std::move(owner);
    rec.content_type = std::move(content_type);
    rec.plaintext_length = plaintext.size();
    rec.nonce.resize(kNonceBytes);
    if (RAND_bytes(rec.nonce.data(), static_cast<int>(rec.nonce.size())) != 1) {
      fail(ErrorCode::Config, "RAND_bytes failed");
    }

    auto key = derive_key(rec.owner);
    const Bytes aad = associated_data(rec);
    detail::CipherCtx ctx(EVP_CIPHER_CTX_new());
    rec.ciphertext.resize(plaintext.size() + kTagBytes);
    int len = 0;
    bool ok = ctx && EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) == 1 &&
              EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, kNonceBytes, nullptr) == 1 &&
              EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), rec.nonce.data()) == 1 &&
              EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) == 1 &&
              EVP_EncryptUpdate(ctx.get(), rec.ciphertext.data(), &len, plaintext.data(),
                                static_cast<int>(plaintext.size())) == 1 &&
              EVP_EncryptFinal_ex(ctx.get(), rec.ciphertext.data() + len, &len) == 1 &&
              EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kTagBytes,
                                  rec.ciphertext.data() + plaintext.size()) == 1;
    OPENSSL_cleanse(key.data(), key.size());
    if (!ok) fail(ErrorCode::Config, "AES-GCM encryption failed");
    return rec;
  }

  /// Decrypts with the key of rec.owner. Returns nothing partial: any tag or
  /// shape mismatch raises Error(Integrity).
  Bytes open(const StoredImage& rec) const {
    require_master();
    if (rec.nonce.size() != kNonceBytes || rec.ciphertext.size() < kTagBytes ||
        rec.ciphertext.size() - kTagBytes != rec.plaintext_length) {
      fail(ErrorCode::Integrity, "malformed image record");
    }
    const std::size_t body = rec.ciphertext.size() - kTagBytes;
    auto key = derive_key(rec.owner);
    const Bytes aad = associated_data(rec);
    Bytes tag(rec.ciphertext.end() - kTagBytes, rec.ciphertext.end());
    Bytes plain(body);
    detail::CipherCtx ctx(EVP_CIPHER_CTX_new());
    int len = 0;
    bool ok = ctx && EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) == 1 &&
              EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, kNonceBytes, nullptr) == 1 &&
              EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), rec.nonce.data()) == 1 &&
              EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) == 1 &&
              EVP_DecryptUpdate(ctx.get(), plain.data(), &len, rec.ciphertext.data(),
                                static_cast<int>(body)) == 1 &&
              EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kTagBytes, tag.data()) == 1 &&
              EVP_DecryptFinal_ex(ctx.get(), plain.data() + len, &len) == 1;
    OPENSSL_cleanse(key.data(), key.size());
    if (!ok) {
      OPENSSL_cleanse(plain.data(), plain.size());
      fail(ErrorCode::Integrity, "image record failed authentication");
    }
    return plain;
  }

 private:
  void require_master() const {
    if (master_.empty()) fail(ErrorCode::Config, "vault master secret not configured");
  }

  Bytes master_;
};

/// Persistence engine for sealed records.
class RecordStore {
 public:
  virtual ~RecordStore() = default;
  virtual void put(const StoredImage& rec) = 0;
  virtual std::optional<StoredImage> get(const std::string& image_id) const = 0;
  virtual std::vector<StoredImage> load_all() const = 0;
};

class MemoryRecordStore final : public RecordStore {
 public:
  void put(const StoredImage& rec) override {
    std::lock_guard lock(mutex_);
    records_[rec.image_id] = serialize_record(rec);
  }
  std::optional<StoredImage> get(const std::string& image_id) const override {
    std::lock_guard lock(mutex_);
    auto it = records_.find(image_id);
    if (it == records_.end()) return std::nullopt;
    return deserialize_record(it->second);
  }
  std::vector<StoredImage> load_all() const override {
    std::lock_guard lock(mutex_);
    std::vector<StoredImage> out;
    for (const auto& [id, raw] : records_) out.push_back(deserialize_record(raw));
    return out;
  }

  /// Raw at-rest bytes, for opacity checks.
  std::vector<Bytes> raw_records() const {
    std::lock_guard lock(mutex_);
    std::vector<Bytes> out;
    for (const auto& [id, raw] : records_) out.push_back(raw);
    return out;
  }

 private:
  mutable std::mutex mutex_;
  std::map<std::string, Bytes> records_;
};

/// One `<image_id>.rec` file per record under a directory.
class DirectoryRecordStore final : public RecordStore {
 public:
  explicit DirectoryRecordStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) fail(ErrorCode::Config, "cannot create vault directory " + dir_.string());
  }

  const std::filesystem::path& dir() const noexcept { return dir_; }

  void put(const StoredImage& rec) override {
    const auto path = path_for(rec.image_id);
    const auto tmp = path.string() + ".tmp";
    const Bytes raw = serialize_record(rec);
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
      if (!out) fail(ErrorCode::Config, "cannot write " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) fail(ErrorCode::Config, "cannot publish " + path.string());
  }

  std::optional<StoredImage> get(const std::string& image_id) const override {
    if (!safe_id(image_id)) return std::nullopt;
    std::ifstream in(path_for(image_id), std::ios::binary);
    if (!in) return std::nullopt;
    Bytes raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_record(raw);
  }

  std::vector<StoredImage> load_all() const override {
    std::vector<StoredImage> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".rec") continue;
      if (auto rec = get(entry.path().stem().string())) out.push_back(std::move(*rec));
    }
    return out;
  }

 private:
  static bool safe_id(std::string_view id) {
    if (id.empty() || id.size() > 128) return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
      return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-';
    });
  }
  std::filesystem::path path_for(const std::string& image_id) const {
    if (!safe_id(image_id)) fail(ErrorCode::Validation, "invalid image id");
    return dir_ / (image_id + ".rec");
  }

  std::filesystem::path dir_;
};

/// Who is asking to open an image: its owner, or a login session that
/// legitimately presented it in a challenge.
struct Requester {
  std::string principal;
  std::vector<std::string> presented;
};

class ImageVault {
 public:
  ImageVault(ImageCipher cipher, std::unique_ptr<RecordStore> store)
      : cipher_(std::move(cipher)), store_(std::move(store)) {
    if (!store_) fail(ErrorCode::Config, "vault record store missing");
    for (const StoredImage& rec : store_->load_all()) index(rec);
  }

  /// In-memory vault, mostly for tests and simulations.
  explicit ImageVault(Bytes master_secret)
      : ImageVault(ImageCipher(std::move(master_secret)), std::make_unique<MemoryRecordStore>()) {}

  const ImageCipher& cipher() const noexcept { return cipher_; }
  RecordStore& store() noexcept { return *store_; }

  StoredImage seal(const Bytes& plaintext, const std::string& owner, const std::string& content_type) {
    if (owner.empty()) fail(ErrorCode::Validation, "owner must not be empty");
    std::string id = "img-" + random_id();
    StoredImage rec = cipher_.seal(plaintext, owner, std::move(id), content_type);
    std::unique_lock lock(mutex_);
    store_->put(rec);
    index_locked(rec);
    return rec;
  }

  Bytes open(const std::string& image_id, const Requester& requester) const {
    std::optional<StoredImage> rec;
    {
      std::shared_lock lock(mutex_);
      auto it = meta_.find(image_id);
      if (it == meta_.end()) fail(ErrorCode::NotFound, "unknown image " + image_id);
      const bool owner = it->second.owner == requester.principal;
      const bool presented = std::find(requester.presented.begin(), requester.presented.end(),
                                       image_id) != requester.presented.end();
      if (!owner && !presented) fail(ErrorCode::Authorization, "requester may not open " + image_id);
    }
    rec = store_->get(image_id);
    if (!rec) fail(ErrorCode::NotFound, "unknown image " + image_id);
    if (rec->image_id != image_id) fail(ErrorCode::Integrity, "record id mismatch");
    return cipher_.open(*rec);
  }

  std::optional<std::string> content_type(const std::string& image_id) const {
    std::shared_lock lock(mutex_);
    auto it = meta_.find(image_id);
    if (it == meta_.end()) return std::nullopt;
    return it->second.content_type;
  }

  std::optional<std::string> owner_of(const std::string& image_id) const {
    std::shared_lock lock(mutex_);
    auto it = meta_.find(image_id);
    if (it == meta_.end()) return std::nullopt;
    return it->second.owner;
  }

  /// Adds a SYSTEM-owned decoy. The id is derived from the content, so
  /// re-ingesting the same file is a no-op.
  std::string add_decoy(const Bytes& plaintext, const std::string& content_type) {
    std::array<std::uint8_t, SHA256_DIGEST_LENGTH> digest{};
    SHA256(plaintext.data(), plaintext.size(), digest.data());
    std::string id = "decoy-" + to_hex(digest.data(), 16);
    std::unique_lock lock(mutex_);
    if (meta_.count(id) != 0) return id;
    StoredImage rec = cipher_.seal(plaintext, std::string(kSystemOwner), id, content_type);
    store_->put(rec);
    index_locked(rec);
    return id;
  }

  /// Seals every *.png / *.jpg / *.jpeg file in `dir` as a decoy.
  std::size_t ingest_decoys(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) fail(ErrorCode::Config, "decoy directory missing: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::size_t added = 0;
    for (const auto& path : files) {
      std::string ext = path.extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      std::string ct;
      if (ext == ".png") {
        ct = "image/png";
      } else if (ext == ".jpg" || ext == ".jpeg") {
        ct = "image/jpeg";
      } else {
        continue;
      }
      std::ifstream in(path, std::ios::binary);
      Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      if (data.empty() || data.size() > kMaxImageBytes) continue;
      const std::size_t before = decoy_count();
      add_decoy(data, ct);
      if (decoy_count() > before) ++added;
    }
    return added;
  }

  std::size_t decoy_count() const {
    std::shared_lock lock(mutex_);
    return decoys_.size();
  }

  std::vector<std::string> decoys() const {
    std::shared_lock lock(mutex_);
    return {decoys_.begin(), decoys_.end()};
  }

  /// `count` distinct decoys outside `exclude`, uniform over the eligible set.
  std::vector<std::string> pick_decoys(const std::set<std::string>& exclude, std::size_t count,
                                       RandomSource& rng) const {
    std::vector<std::string> eligible;
    {
      std::shared_lock lock(mutex_);
      eligible.reserve(decoys_.size());
      for (const auto& id : decoys_) {
        if (exclude.count(id) == 0) eligible.push_back(id);
      }
    }
    if (eligible.size() < count) fail(ErrorCode::PoolExhausted, "not enough eligible decoys");
    // Partial Fisher-Yates: the first `count` slots end up a uniform sample.
    for (std::size_t i = 0; i < count; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(eligible.size() - i));
      std::swap(eligible[i], eligible[j]);
    }
    eligible.resize(count);
    return eligible;
  }

 private:
  struct Meta {
    std::string owner;
    std::string content_type;
  };

  void index(const StoredImage& rec) {
    std::unique_lock lock(mutex_);
    index_locked(rec);
  }
  void index_locked(const StoredImage& rec) {
    meta_[rec.image_id] = Meta{rec.owner, rec.content_type};
    if (rec.owner == kSystemOwner) decoys_.insert(rec.image_id);
  }

  static std::string random_id() {
    std::array<std::uint8_t, 16> raw{};
    if (RAND_bytes(raw.data(), static_cast<int>(raw.size())) != 1) fail(ErrorCode::Config, "RAND_bytes failed");
    return to_hex(raw.data(), raw.size());
  }

  ImageCipher cipher_;
  std::unique_ptr<RecordStore> store_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, Meta> meta_;
  std::set<std::string> decoys_;  // ordered, so seeded picks are reproducible
};

}  // namespace clickotp
