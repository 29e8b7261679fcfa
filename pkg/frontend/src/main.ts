// Entry point: picks the app by URL. /join/<token> opens the student app,
// ?role=teacher the teacher console, anything else a landing page.

import { runStudentApp } from "./student.js";
import { runTeacherApp } from "./teacher.js";
import { el } from "./ui.js";

const root = document.getElementById("app")!;

function landing(): void {
  const tokenInput = el("input", { id: "token", placeholder: "join token" }) as HTMLInputElement;
  const joinBtn = el("button", {}, ["Join as student"]) as HTMLButtonElement;
  joinBtn.onclick = () => {
    const token = tokenInput.value.trim();
    if (token) location.href = `/join/${encodeURIComponent(token)}`;
  };
  const teacherBtn = el("button", {}, ["Teacher console"]) as HTMLButtonElement;
  teacherBtn.onclick = () => {
    location.href = "/?role=teacher";
  };
  root.replaceChildren(
    el("div", { class: "card join-card" }, [
      el("h1", {}, ["Breakable Machine"]),
      el("p", {}, ["Scan the QR code on the projector, or paste the join token:"]),
      el("div", {}, [tokenInput, joinBtn]),
      el("hr", {}),
      teacherBtn,
    ]),
  );
}

const path = location.pathname;
if (path.startsWith("/join/")) {
  void runStudentApp(root, decodeURIComponent(path.slice("/join/".length)));
} else if (new URLSearchParams(location.search).get("role") === "teacher") {
  void runTeacherApp(root);
} else {
  landing();
}
