#include <stdio.h>
#include <string.h>

#include "cellgate.h"

#define CHECK(cond)                                                     \
    do {                                                                \
        if (!(cond)) {                                                  \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #cond, \
                    cg_last_error());                                   \
            return 1;                                                   \
        }                                                               \
    } while (0)

static const char *DELIVER = "00040B913316325476F800004230510103544008C834888E2ECBCB";

int main(void) {
    char *json = NULL;
    char *hex = NULL;

    CHECK(cg_sms_decode(DELIVER, &json) == CG_STATUS_OK);
    CHECK(strstr(json, "Hi there") != NULL);
    CHECK(cg_sms_encode(json, &hex) == CG_STATUS_OK);
    CHECK(strcmp(hex, DELIVER) == 0);
    cg_string_free(json);
    cg_string_free(hex);

    CHECK(cg_sms_decode("0", &json) == CG_STATUS_CODEC);
    CHECK(strlen(cg_last_error()) > 0);

    const uint8_t mms[] = {0x8C, 0x83, 0x98, 0x54, 0x31, 0x00, 0x8D, 0x92, 0x95, 0x83};
    uint8_t *out = NULL;
    size_t len = 0;
    CHECK(cg_mms_decode(mms, sizeof mms, &json) == CG_STATUS_OK);
    CHECK(cg_mms_encode(json, &out, &len) == CG_STATUS_OK);
    CHECK(len == sizeof mms && memcmp(out, mms, len) == 0);
    cg_bytes_free(out, len);
    cg_string_free(json);

    CgUrcRegistry *reg = cg_urc_registry_new();
    CgLineKind kind;
    CHECK(cg_classify_line(reg, "+CRING: VOICE", &kind, NULL) == CG_STATUS_OK);
    CHECK(kind == CG_LINE_KIND_URC);
    CHECK(cg_classify_line(reg, "^SYSSTART", &kind, NULL) == CG_STATUS_OK);
    CHECK(kind == CG_LINE_KIND_INFO);
    CHECK(cg_urc_registry_add(reg, "^SYSSTART", false) == CG_STATUS_OK);
    CHECK(cg_classify_line(reg, "^SYSSTART", &kind, &json) == CG_STATUS_OK);
    CHECK(kind == CG_LINE_KIND_URC);
    printf("%s\n", json);
    cg_string_free(json);
    cg_urc_registry_free(reg);

    printf("cellgate %s ok\n", cg_version());
    return 0;
}
