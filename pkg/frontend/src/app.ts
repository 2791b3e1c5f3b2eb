/** Single-page annotation flow: load task, choose, advance, repeat.
 *
 * The server is the source of truth: the client holds only the annotator
 * token and whatever task it is currently showing. Reviews render in the
 * order delivered; the client never re-randomizes sides.
 */

import { ApiError, type AnnotationApi } from "./api.js";
import { CHOICES, toTaskView, type Choice, type TaskView } from "./types.js";

type State =
  | { kind: "loading" }
  | { kind: "task"; view: TaskView; submitting: boolean }
  | { kind: "done"; judged: number; total: number };

export class AnnotationApp {
  private state: State = { kind: "loading" };
  private bannerMessage: string | null = null;
  private retryAction: (() => Promise<void>) | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: AnnotationApi,
    private readonly annotator: string,
  ) {}

  async start(): Promise<void> {
    await this.loadNext();
  }

  /** The task currently displayed, if any (read-only, for tests). */
  get currentTask(): TaskView | null {
    return this.state.kind === "task" ? this.state.view : null;
  }

  private async loadNext(): Promise<void> {
    try {
      const response = await this.api.nextTask(this.annotator);
      this.state = response.done
        ? { kind: "done", judged: response.judged, total: response.total }
        : { kind: "task", view: toTaskView(response), submitting: false };
      this.bannerMessage = null;
      this.retryAction = null;
    } catch (err) {
      // keep whatever is on screen; the banner offers a retry
      if (this.state.kind === "task") {
        this.state = { ...this.state, submitting: false };
      }
      this.bannerMessage = describeError(err);
      this.retryAction = () => this.loadNext();
    }
    this.render();
  }

  private async choose(choice: Choice): Promise<void> {
    if (this.state.kind !== "task" || this.state.submitting) {
      return;
    }
    const view = this.state.view;
    this.state = { kind: "task", view, submitting: true };
    this.bannerMessage = null;
    this.render();
    try {
      await this.api.submitJudgment(this.annotator, view.task_id, choice);
      await this.loadNext();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // already judged: recover idempotently by advancing
        await this.loadNext();
        return;
      }
      this.state = { kind: "task", view, submitting: false };
      this.bannerMessage = describeError(err);
      this.retryAction = () => this.choose(choice);
      this.render();
    }
  }

  render(): void {
    const nodes: HTMLElement[] = [];
    if (this.bannerMessage) {
      nodes.push(this.buildBanner(this.bannerMessage));
    }
    switch (this.state.kind) {
      case "loading":
        nodes.push(el("p", { id: "loading" }, "Loading next task..."));
        break;
      case "done":
        nodes.push(this.buildDone(this.state.judged, this.state.total));
        break;
      case "task":
        nodes.push(...this.buildTask(this.state.view, this.state.submitting));
        break;
    }
    this.root.replaceChildren(...nodes);
  }

  private buildDone(judged: number, total: number): HTMLElement {
    return el(
      "section",
      { id: "completion" },
      el("h2", {}, "All tasks complete"),
      el(
        "p",
        { id: "completion-count" },
        `You judged ${judged} of ${total} comparisons. Thank you!`,
      ),
    );
  }

  private buildTask(view: TaskView, submitting: boolean): HTMLElement[] {
    return [
      el("header", { id: "progress" }, `Task ${view.position} of ${view.total}`),
      el(
        "section",
        { id: "context" },
        el("h2", {}, "Criterion: ", el("span", { id: "criterion" }, view.criterion)),
        el("p", { id: "guideline" }, view.guideline),
        el("p", { id: "paragraph" }, view.paragraph),
        el("a", { id: "paper-link", href: view.paper_link, target: "_blank" }, "Open the paper"),
      ),
      el(
        "section",
        { id: "reviews" },
        el(
          "article",
          { id: "review-left", class: "review" },
          el("h3", {}, "Review A"),
          el("p", {}, view.review_left),
        ),
        el(
          "article",
          { id: "review-right", class: "review" },
          el("h3", {}, "Review B"),
          el("p", {}, view.review_right),
        ),
      ),
      el(
        "section",
        { id: "choices" },
        ...CHOICES.map((choice) => this.buildChoiceButton(choice, submitting)),
      ),
    ];
  }

  private buildChoiceButton(choice: Choice, submitting: boolean): HTMLElement {
    const label = choice === "Left" ? "A is better" : choice === "Right" ? "B is better" : "Tie";
    const button = el("button", { "data-choice": choice, type: "button" }, label);
    if (submitting) {
      button.setAttribute("disabled", "disabled");
    }
    button.addEventListener("click", () => {
      void this.choose(choice);
    });
    return button;
  }

  private buildBanner(message: string): HTMLElement {
    const retry = el("button", { id: "retry", type: "button" }, "Retry");
    retry.addEventListener("click", () => {
      const action = this.retryAction;
      this.retryAction = null;
      if (action) {
        void action();
      }
    });
    return el("div", { id: "retry-banner", role: "alert" }, el("span", {}, message), retry);
  }
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) {
    return `The server rejected the request (${err.status}): ${err.message}`;
  }
  return "Could not reach the server. Your work so far is saved on the server.";
}

type Attrs = Record<string, string>;

function el(tag: string, attrs: Attrs = {}, ...children: (HTMLElement | string)[]): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(typeof child === "string" ? document.createTextNode(child) : child);
  }
  return node;
}
