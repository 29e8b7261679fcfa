// Tiny DOM helper: element with attributes and children.

export function el(
  tag: string,
  attrs: Record<string, string> = {},
  children: (HTMLElement | string)[] = [],
): HTMLElement {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    node.setAttribute(k, v);
  }
  node.append(...children);
  return node;
}

export function jpegSrc(b64: string): string {
  return `data:image/jpeg;base64,${b64}`;
}
