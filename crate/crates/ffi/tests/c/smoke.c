#include <stdio.h>
#include <string.h>
#include "convrec.h"

static const char *CATALOG =
    "{\"items\":[{\"id\":\"a\",\"properties\":{\"C\":[\"x\"]}},"
    "{\"id\":\"b\",\"properties\":{\"C\":[\"x\",\"y\"]}}],"
    "\"questions\":[{\"id\":\"Q\",\"prompt\":\"?\",\"answers\":[{\"id\":\"x\"},{\"id\":\"y\"}],"
    "\"properties\":[\"C\"],\"strategy\":\"ujs\"}],"
    "\"properties\":[{\"id\":\"C\",\"clone_of\":\"Q\"}]}";

int main(void) {
    ConvrecModel *model = NULL;
    if (convrec_model_from_json(CATALOG, CONVREC_MODEL_KIND_AUTO, &model) != CONVREC_STATUS_OK) {
        fprintf(stderr, "load: %s\n", convrec_last_error());
        return 1;
    }
    ConvrecSession *session = NULL;
    if (convrec_session_new(model, 1, 0, false, &session) != CONVREC_STATUS_OK) return 2;
    convrec_model_free(model);

    size_t q = 99;
    ConvrecStop stop = CONVREC_STOP_NONE;
    if (convrec_session_next_question(session, &q, &stop) != CONVREC_STATUS_OK || stop != CONVREC_STOP_NONE || q != 0)
        return 3;
    if (convrec_session_answer(session, 0, 1) != CONVREC_STATUS_OK) return 4;

    double post[2];
    size_t n = 0;
    if (convrec_session_posterior(session, post, 2, &n) != CONVREC_STATUS_OK || n != 2) return 5;
    if (post[0] != 0.0 || post[1] != 1.0) return 6;
    if (convrec_session_next_question(session, &q, &stop) != CONVREC_STATUS_OK || stop != CONVREC_STOP_THRESHOLD)
        return 7;
    if (convrec_session_answer(session, 0, 0) != CONVREC_STATUS_REPEATED_QUESTION) return 8;
    if (convrec_last_error() == NULL) return 9;
    convrec_session_free(session);
    printf("ok %s\n", convrec_version());
    return 0;
}
