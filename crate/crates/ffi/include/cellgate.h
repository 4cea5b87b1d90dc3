#ifndef CELLGATE_H
#define CELLGATE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * How the AT classifier saw a line.
 */
typedef enum CgLineKind {
  CG_LINE_KIND_EMPTY = 0,
  CG_LINE_KIND_PROMPT = 1,
  CG_LINE_KIND_ECHO = 2,
  CG_LINE_KIND_INFO = 3,
  CG_LINE_KIND_FINAL = 4,
  CG_LINE_KIND_URC = 5,
} CgLineKind;

/**
 * Result of every call.
 */
typedef enum CgStatus {
  CG_STATUS_OK = 0,
  CG_STATUS_NULL_POINTER = 1,
  CG_STATUS_INVALID_UTF8 = 2,
  /**
   * Input was not valid JSON, hex, or did not describe a PDU.
   */
  CG_STATUS_INVALID_INPUT = 3,
  /**
   * The codec rejected the input.
   */
  CG_STATUS_CODEC = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  CG_STATUS_INTERNAL = 5,
} CgStatus;

/**
 * Opaque set of unsolicited result code prefixes.
 */
typedef struct CgUrcRegistry CgUrcRegistry;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string.
 */
const char *cg_version(void);

/**
 * Message for the most recent failure on this thread; empty after a
 * success. Valid until the next call on the same thread.
 */
const char *cg_last_error(void);

/**
 * # Safety
 * `s` is null or was returned by this library and not yet freed.
 */
void cg_string_free(char *s);

/**
 * # Safety
 * `data`/`len` are null/0 or exactly as returned by this library.
 */
void cg_bytes_free(uint8_t *data, size_t len);

/**
 * Decodes an SMS-SUBMIT or SMS-DELIVER (hex, with SMSC prefix) to JSON.
 *
 * # Safety
 * `hex` is a NUL-terminated string; `out_json` is valid for one write.
 */
enum CgStatus cg_sms_decode(const char *hex, char **out_json);

/**
 * Encodes the JSON form produced by [`cg_sms_decode`] back to hex.
 *
 * # Safety
 * `json` is a NUL-terminated string; `out_hex` is valid for one write.
 */
enum CgStatus cg_sms_encode(const char *json, char **out_hex);

/**
 * Builds the SUBMIT PDUs for a text, segmenting when needed. Writes a JSON
 * array of `{"pdu": <hex>, "length": <tpdu octets>}`.
 *
 * # Safety
 * `to` and `text` are NUL-terminated strings; `out_json` is valid for one write.
 */
enum CgStatus cg_sms_submit(const char *to, const char *text, uint8_t concat_ref, char **out_json);

/**
 * Decodes a binary MMS PDU to JSON.
 *
 * # Safety
 * `data` is valid for `len` bytes (or null with `len == 0`); `out_json` is
 * valid for one write.
 */
enum CgStatus cg_mms_decode(const uint8_t *data, size_t len, char **out_json);

/**
 * Encodes the JSON form of an MMS PDU. The buffer is released with
 * [`cg_bytes_free`].
 *
 * # Safety
 * `json` is a NUL-terminated string; `out_data` and `out_len` are valid for
 * one write each.
 */
enum CgStatus cg_mms_encode(const char *json, uint8_t **out_data, size_t *out_len);

/**
 * A registry with the standard unsolicited result codes.
 */
struct CgUrcRegistry *cg_urc_registry_new(void);

/**
 * A registry with no prefixes at all.
 */
struct CgUrcRegistry *cg_urc_registry_empty(void);

/**
 * # Safety
 * `reg` is null or came from `cg_urc_registry_new`/`_empty` and is not used
 * afterwards.
 */
void cg_urc_registry_free(struct CgUrcRegistry *reg);

/**
 * Adds a vendor prefix such as `"^BOOT"`. With `two_line` set, the payload
 * is expected on the following line.
 *
 * # Safety
 * `reg` is a live registry; `prefix` is a NUL-terminated string.
 */
enum CgStatus cg_urc_registry_add(struct CgUrcRegistry *reg, const char *prefix, bool two_line);

/**
 * Classifies one line without its terminator, the way the engine would
 * with no command in flight. `out_json` (optional) receives the parsed
 * fields.
 *
 * # Safety
 * `reg` is a live registry; `line` is a NUL-terminated string; `out_kind`
 * is valid for one write; `out_json` is null or valid for one write.
 */
enum CgStatus cg_classify_line(const struct CgUrcRegistry *reg,
                               const char *line,
                               enum CgLineKind *out_kind,
                               char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CELLGATE_H */
