export const TOAST_LIFETIME_MS = 4000;

/** Append a transient error toast; returns the element for inspection. */
export function showToast(container: HTMLElement, message: string): HTMLElement {
  const el = document.createElement("div");
  el.className = "toast";
  el.textContent = message;
  container.appendChild(el);
  setTimeout(() => el.remove(), TOAST_LIFETIME_MS);
  return el;
}
