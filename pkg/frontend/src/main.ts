/** Bootstrap: read session/annotator from the URL and mount the app.
 *
 * The bundle is served by the annotation service itself, so the API lives
 * at the same origin. `?session=` and `?annotator=` select the session and
 * the annotator token; both default to "demo".
 */

import { HttpAnnotationApi } from "./api.js";
import { AnnotationApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const session = params.get("session") ?? "demo";
const annotator = params.get("annotator") ?? "demo";

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app mount point");
}

const app = new AnnotationApp(root, new HttpAnnotationApi("", session), annotator);
void app.start();
