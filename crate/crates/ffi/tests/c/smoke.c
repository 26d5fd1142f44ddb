#include <stdio.h>
#include <string.h>
#include "storystage.h"

int main(void) {
    StsSession *s = NULL;
    if (sts_session_new("robinhood", NULL, &s) != STS_STATUS_OK) return 1;
    char *out = NULL;
    const char *grab = "{\"seq\":1,\"t\":100,\"type\":\"Grab\",\"character\":\"mary\"}";
    if (sts_session_ingest(s, grab, 0, &out) != STS_STATUS_OK) return 2;
    if (strstr(out, "\"Ack\"") == NULL) return 3;
    sts_string_free(out);
    if (sts_session_export(s, &out) != STS_STATUS_WRONG_PHASE) return 4;
    if (sts_last_error() == NULL) return 5;
    sts_session_free(s);
    printf("ok %s\n", sts_version());
    return 0;
}
