// Page entry point: build the app against the same origin that served the
// page and restore any session recorded by a previous visit.

import { ApiClient } from "./api.js";
import { createChatApp } from "./app.js";

const client = new ApiClient("");
const app = createChatApp(document, client, window.sessionStorage);
void app.boot();
