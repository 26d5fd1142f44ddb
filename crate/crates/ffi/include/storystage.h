#ifndef STORYSTAGE_H
#define STORYSTAGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum StsStatus {
  STS_STATUS_OK = 0,
  STS_STATUS_NULL_ARGUMENT = 1,
  STS_STATUS_INVALID_UTF8 = 2,
  STS_STATUS_INVALID_JSON = 3,
  STS_STATUS_INVALID_CONFIG = 4,
  STS_STATUS_UNKNOWN_FIXTURE = 5,
  STS_STATUS_SCHEMA_VIOLATION = 6,
  STS_STATUS_WRONG_PHASE = 7,
  STS_STATUS_SESSION_ERROR = 8,
  STS_STATUS_PANIC = 9,
} StsStatus;

/**
 * A live session.
 */
typedef struct StsSession StsSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Owned by the library.
 */
const char *sts_last_error(void);

/**
 * Library version. Static storage.
 */
const char *sts_version(void);

/**
 * Starts a session on a bundled fixture. `config_json` may be null for defaults.
 *
 * # Safety
 * String arguments are null or NUL-terminated; `out` is writable.
 */
enum StsStatus sts_session_new(const char *fixture_id,
                               const char *config_json,
                               struct StsSession **out);

/**
 * Restores a session from a saved document.
 *
 * # Safety
 * String arguments are null or NUL-terminated; `out` is writable.
 */
enum StsStatus sts_session_load(const char *document_json,
                                const char *config_json,
                                struct StsSession **out);

/**
 * Feeds one client message; `*out_json` receives the JSON array of replies.
 * Engine-level rejections arrive as `Error` replies with status `Ok`.
 *
 * # Safety
 * `s` comes from this library; `message_json` is NUL-terminated; `out_json` is writable.
 */
enum StsStatus sts_session_ingest(struct StsSession *s,
                                  const char *message_json,
                                  uint64_t now_ms,
                                  char **out_json);

/**
 * Writes the session document as JSON.
 *
 * # Safety
 * `s` comes from this library; `out_json` is writable.
 */
enum StsStatus sts_session_document(struct StsSession *s, char **out_json);

/**
 * Exports the arranged timeline: `{synopsis, screenplay_text, screenplay, continuity}`.
 *
 * # Safety
 * `s` comes from this library; `out_json` is writable.
 */
enum StsStatus sts_session_export(struct StsSession *s, char **out_json);

/**
 * Replays a saved document from scratch and exports it.
 *
 * # Safety
 * String arguments are null or NUL-terminated; `out_json` is writable.
 */
enum StsStatus sts_replay(const char *document_json, const char *config_json, char **out_json);

/**
 * Releases a session. Null is ignored.
 *
 * # Safety
 * `s` is null or came from this library and is not used afterwards.
 */
void sts_session_free(struct StsSession *s);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `p` is null or came from this library and is not used afterwards.
 */
void sts_string_free(char *p);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STORYSTAGE_H */
